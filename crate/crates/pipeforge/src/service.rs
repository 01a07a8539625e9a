//! JSON API under `/api/v1`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use pipeforge_core::inference::PlanError;
use pipeforge_core::registry::{
    Application, CiEngine, CiPipeline, Entity, EntityKind, ListFilter, RegistryError,
    RegistryStore, Repository,
};
use pipeforge_core::renderer::RenderError;
use pipeforge_core::scanner::ScanError;
use pipeforge_core::{scan_repository, RenderMode, ScanConfig, TemplateCatalog};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::provision::{
    excluded_stages, plan_repository, provision, GenerateOptions, ProvisionError, ProvisionRequest,
};

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: RegistryStore,
    catalog: TemplateCatalog,
    locator: String,
    /// Serializes writers inside this process; the store's lock file still
    /// guards against other processes.
    writes: Mutex<()>,
}

impl AppState {
    pub fn new(store: RegistryStore, catalog: TemplateCatalog, locator: impl Into<String>) -> Self {
        AppState {
            inner: Arc::new(Inner {
                store,
                catalog,
                locator: locator.into(),
                writes: Mutex::new(()),
            }),
        }
    }

    fn write<T>(&self, f: impl FnOnce() -> Result<T, ApiError>) -> Result<T, ApiError> {
        let _guard = self.inner.writes.lock().unwrap_or_else(|p| p.into_inner());
        f()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }

    fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.body[key] = json!(value);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(self.body)).into_response()
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let status = match &e {
            RegistryError::NotFound(_) => StatusCode::NOT_FOUND,
            RegistryError::DuplicateName { .. } | RegistryError::ReferentialIntegrity { .. } => {
                StatusCode::CONFLICT
            }
            RegistryError::DanglingReference { .. } | RegistryError::Invalid { .. } => {
                StatusCode::BAD_REQUEST
            }
            RegistryError::NoTemplatesMatched(_) => StatusCode::UNPROCESSABLE_ENTITY,
            RegistryError::Busy(_) => StatusCode::SERVICE_UNAVAILABLE,
            RegistryError::Corrupt { .. } | RegistryError::Io { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        let err = ApiError::new(status, &e);
        match e {
            RegistryError::ReferentialIntegrity { referrers, .. } => err.with("referrers", referrers),
            _ => err,
        }
    }
}

impl From<ProvisionError> for ApiError {
    fn from(e: ProvisionError) -> Self {
        let message = e.to_string();
        match e {
            ProvisionError::Registry(r) => r.into(),
            ProvisionError::Render(RenderError::PolicyViolation { block }) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message).with("block", block)
            }
            ProvisionError::Render(RenderError::EngineUnsupported { block, .. }) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message).with("block", block)
            }
            ProvisionError::Plan(PlanError::NoCatalogGroup(language)) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message).with("language", language)
            }
            ProvisionError::Scan(_)
            | ProvisionError::NoLocation(_)
            | ProvisionError::NoEngine(_)
            | ProvisionError::RepositoryMismatch { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, message)
            }
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message),
        }
    }
}

/// JSON body extractor whose rejections are all 400s with a JSON error.
pub struct Json<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Json<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match axum::Json::<T>::from_request(req, state).await {
            Ok(axum::Json(v)) => Ok(Json(v)),
            Err(rejection) => Err(ApiError::new(StatusCode::BAD_REQUEST, body_error(&rejection))),
        }
    }
}

fn body_error(rejection: &JsonRejection) -> String {
    format!("malformed request body: {}", rejection.body_text())
}

type ApiResult = Result<Response, ApiError>;

fn ok(value: impl Serialize) -> ApiResult {
    Ok(axum::Json(value).into_response())
}

fn created(value: impl Serialize) -> ApiResult {
    Ok((StatusCode::CREATED, axum::Json(value)).into_response())
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/applications", get(list_applications).post(create_application))
        .route(
            "/applications/{id}",
            get(get_entity).put(update_application).delete(delete_entity),
        )
        .route("/repositories", get(list_repositories).post(create_repository))
        .route(
            "/repositories/{id}",
            get(get_entity).put(update_repository).delete(delete_entity),
        )
        .route("/repositories/{id}/scan", post(scan))
        .route("/repositories/{id}/plan", post(plan))
        .route("/repositories/{id}/provision", post(provision_repository))
        .route("/ci-engines", get(list_engines).post(create_engine))
        .route(
            "/ci-engines/{id}",
            get(get_entity).put(update_engine).delete(delete_entity),
        )
        .route("/pipelines", get(list_pipelines).post(create_pipeline))
        .route(
            "/pipelines/{id}",
            get(get_entity).put(update_pipeline).delete(delete_entity),
        )
        .route("/catalog/blocks", get(catalog_blocks))
        .route("/catalog/groups", get(catalog_groups));
    Router::new().nest("/api/v1", api).with_state(state)
}

async fn health() -> ApiResult {
    ok(json!({ "status": "ok" }))
}

fn entity_json(entity: Entity) -> Value {
    match entity {
        Entity::Application(e) => json!(e),
        Entity::Repository(e) => json!(e),
        Entity::CiEngine(e) => json!(e),
        Entity::CiPipeline(e) => json!(e),
    }
}

fn list(state: &AppState, kind: EntityKind, filter: &ListFilter) -> ApiResult {
    let registry = state.inner.store.load()?;
    let items: Vec<Value> = registry.list(kind, filter).into_iter().map(entity_json).collect();
    ok(items)
}

fn upsert(state: &AppState, entity: Entity) -> Result<Value, ApiError> {
    state.write(|| {
        let (id, registry) = state.inner.store.update(|reg| reg.upsert(entity))?;
        Ok(entity_json(registry.get(&id)?))
    })
}

fn create(state: &AppState, entity: Entity) -> ApiResult {
    if !entity.id().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "ids are assigned by the server"));
    }
    created(upsert(state, entity)?)
}

/// The path id wins; a conflicting body id is rejected.
fn replace(state: &AppState, path_id: &str, body_id: &mut String, entity: impl FnOnce(String) -> Entity) -> ApiResult {
    if !body_id.is_empty() && body_id != path_id {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("body id {body_id} does not match {path_id}"),
        ));
    }
    let kind = state.inner.store.load()?.get(path_id)?.kind();
    let entity = entity(path_id.to_string());
    if entity.kind() != kind {
        return Err(RegistryError::NotFound(path_id.to_string()).into());
    }
    ok(upsert(state, entity)?)
}

async fn get_entity(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(entity_json(state.inner.store.load()?.get(&id)?))
}

async fn delete_entity(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    state.write(|| {
        state.inner.store.update(|reg| reg.delete(&id))?;
        Ok(())
    })?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct ListQuery {
    application_id: Option<String>,
    repository_id: Option<String>,
    engine_id: Option<String>,
    template: Option<String>,
}

impl ListQuery {
    fn filter(&self) -> ListFilter {
        ListFilter {
            application_id: self.application_id.clone(),
            repository_id: self.repository_id.clone(),
            engine_id: self.engine_id.clone(),
        }
    }
}

async fn list_applications(State(state): State<AppState>) -> ApiResult {
    list(&state, EntityKind::Application, &ListFilter::default())
}

async fn list_repositories(State(state): State<AppState>, Query(q): Query<ListQuery>) -> ApiResult {
    list(&state, EntityKind::Repository, &q.filter())
}

async fn list_engines(State(state): State<AppState>) -> ApiResult {
    list(&state, EntityKind::CiEngine, &ListFilter::default())
}

async fn list_pipelines(State(state): State<AppState>, Query(q): Query<ListQuery>) -> ApiResult {
    let registry = state.inner.store.load()?;
    let catalog = &state.inner.catalog;
    let items: Vec<Value> = registry
        .list(EntityKind::CiPipeline, &q.filter())
        .into_iter()
        .filter(|e| match (e, &q.template) {
            (Entity::CiPipeline(p), Some(t)) => p.uses_template(t, Some(catalog)),
            _ => true,
        })
        .map(entity_json)
        .collect();
    ok(items)
}

async fn create_application(State(state): State<AppState>, Json(e): Json<Application>) -> ApiResult {
    create(&state, Entity::Application(e))
}

async fn create_repository(State(state): State<AppState>, Json(e): Json<Repository>) -> ApiResult {
    create(&state, Entity::Repository(e))
}

async fn create_engine(State(state): State<AppState>, Json(e): Json<CiEngine>) -> ApiResult {
    create(&state, Entity::CiEngine(e))
}

async fn create_pipeline(State(state): State<AppState>, Json(e): Json<CiPipeline>) -> ApiResult {
    create(&state, Entity::CiPipeline(e))
}

async fn update_application(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(mut e): Json<Application>,
) -> ApiResult {
    let mut body_id = std::mem::take(&mut e.id);
    replace(&state, &id, &mut body_id, |id| Entity::Application(Application { id, ..e }))
}

async fn update_repository(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(mut e): Json<Repository>,
) -> ApiResult {
    let mut body_id = std::mem::take(&mut e.id);
    replace(&state, &id, &mut body_id, |id| Entity::Repository(Repository { id, ..e }))
}

async fn update_engine(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(mut e): Json<CiEngine>,
) -> ApiResult {
    let mut body_id = std::mem::take(&mut e.id);
    replace(&state, &id, &mut body_id, |id| Entity::CiEngine(CiEngine { id, ..e }))
}

async fn update_pipeline(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(mut e): Json<CiPipeline>,
) -> ApiResult {
    let mut body_id = std::mem::take(&mut e.id);
    replace(&state, &id, &mut body_id, |id| Entity::CiPipeline(CiPipeline { id, ..e }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct ScanRequest {
    /// Defaults to the repository's location.
    path: Option<PathBuf>,
}

fn scan_error(e: ScanError) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, e)
}

fn repository(state: &AppState, id: &str) -> Result<Repository, ApiError> {
    let registry = state.inner.store.load()?;
    Ok(registry
        .repository(id)
        .ok_or_else(|| RegistryError::NotFound(id.to_string()))?
        .clone())
}

fn location(repo: &Repository, path: Option<PathBuf>) -> Result<PathBuf, ApiError> {
    match path {
        Some(p) => Ok(p),
        None if !repo.location.trim().is_empty() => Ok(PathBuf::from(&repo.location)),
        None => Err(ProvisionError::NoLocation(repo.id.clone()).into()),
    }
}

async fn scan(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ScanRequest>,
) -> ApiResult {
    let repo = repository(&state, &id)?;
    let root = location(&repo, req.path)?;
    ok(scan_repository(&root, &ScanConfig::default()).map_err(scan_error)?)
}

/// Plan preview; nothing is recorded.
async fn plan(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ProvisionRequest>,
) -> ApiResult {
    let repo = repository(&state, &id)?;
    let root = location(&repo, None)?;
    let registry = state.inner.store.load()?;
    let engine_id = req
        .engine_id
        .clone()
        .or(repo.engine_id.clone())
        .ok_or_else(|| ProvisionError::NoEngine(repo.id.clone()))?;
    let engine = registry
        .engine(&engine_id)
        .ok_or_else(|| RegistryError::NotFound(engine_id.clone()))?;
    let mut options = GenerateOptions::new(engine.kind, req.mode.unwrap_or(RenderMode::Inline));
    options.forbid_shell = req.forbid_shell;
    options.strict = req.strict;
    options.exclude_stages = excluded_stages(&registry, &repo.id);
    let (_, plan) = plan_repository(&root, &state.inner.catalog, &options)?;
    ok(plan)
}

async fn provision_repository(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ProvisionRequest>,
) -> ApiResult {
    let result = state.write(|| {
        Ok(provision(
            &state.inner.store,
            &state.inner.catalog,
            &id,
            &req,
            &state.inner.locator,
        )?)
    })?;
    ok(result)
}

#[derive(Serialize)]
struct BlockListing<'a> {
    #[serde(rename = "ref")]
    block_ref: String,
    path: &'a str,
    name: &'a str,
    stage: &'a str,
    language: Option<&'a str>,
    engines: Vec<&'a str>,
    params: &'a [pipeforge_core::catalog::Param],
}

async fn catalog_blocks(State(state): State<AppState>) -> ApiResult {
    let catalog = &state.inner.catalog;
    let items: Vec<BlockListing<'_>> = catalog
        .blocks
        .iter()
        .map(|(path, b)| BlockListing {
            block_ref: catalog.block_ref(path).to_string(),
            path,
            name: &b.name,
            stage: &b.stage_name,
            language: b.language.as_deref(),
            engines: b.engines.keys().map(String::as_str).collect(),
            params: &b.params,
        })
        .collect();
    ok(json!({ "version": catalog.version, "blocks": items }))
}

async fn catalog_groups(State(state): State<AppState>) -> ApiResult {
    let catalog = &state.inner.catalog;
    let groups: Vec<_> = catalog.groups.values().collect();
    ok(json!({ "version": catalog.version, "groups": groups }))
}

/// Serves on `addr` until the process exits.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("pipeforge listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
