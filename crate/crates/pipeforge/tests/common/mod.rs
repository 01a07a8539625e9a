#![allow(dead_code)]

use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pipeforge::service::{router, AppState};
use pipeforge_core::catalog::load_catalog;
use pipeforge_core::registry::RegistryStore;
use serde_json::Value;
use tower::ServiceExt;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn catalog_root() -> PathBuf {
    fixtures().join("catalog")
}

/// Runs the CLI in-process; returns (exit code, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("pipeforge").chain(args.iter().copied());
    let code = pipeforge::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

pub fn app(registry: &Path, locator: &str) -> Router {
    let catalog = load_catalog(&catalog_root(), "1.0").unwrap();
    router(AppState::new(RegistryStore::new(registry), catalog, locator))
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Value,
    pub raw: String,
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(Body::from(body.unwrap_or("").to_string())).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let raw = String::from_utf8(bytes.to_vec()).unwrap();
    let body = serde_json::from_str(&raw).unwrap_or(Value::Null);
    Reply { status, body, raw }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: &Value) -> Reply {
    call(app, Method::POST, uri, Some(&body.to_string())).await
}

/// Creates an engine and a repository at `location`; returns their ids.
pub async fn register(app: &Router, location: &Path, kind: &str) -> (String, String) {
    let engine = post(app, "/api/v1/ci-engines", &serde_json::json!({"name": format!("org-{kind}"), "kind": kind})).await;
    assert_eq!(engine.status, StatusCode::CREATED, "{}", engine.raw);
    let engine_id = engine.body["id"].as_str().unwrap().to_string();
    let repo = post(
        app,
        "/api/v1/repositories",
        &serde_json::json!({
            "name": format!("repo-{kind}"),
            "location": location.to_str().unwrap(),
            "languages": ["Go"],
            "engine_id": engine_id,
        }),
    )
    .await;
    assert_eq!(repo.status, StatusCode::CREATED, "{}", repo.raw);
    (engine_id, repo.body["id"].as_str().unwrap().to_string())
}

pub fn copy_fixture(name: &str, to: &Path) {
    let from = fixtures().join(name);
    let mut stack = vec![from.clone()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let entry = entry.unwrap();
            let rel = entry.path().strip_prefix(&from).unwrap().to_path_buf();
            if entry.file_type().unwrap().is_dir() {
                std::fs::create_dir_all(to.join(&rel)).unwrap();
                stack.push(entry.path());
            } else {
                std::fs::copy(entry.path(), to.join(&rel)).unwrap();
            }
        }
    }
}
