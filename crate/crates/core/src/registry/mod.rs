//! Portal data model: applications, repositories, CI engines and CI
//! pipelines, with referential integrity and file-backed persistence.
//!
//! Ids are opaque tokens of the form `<kind>-<n>`, assigned at creation and
//! never reused. An entity whose `id` is empty is created by [`Registry::upsert`];
//! otherwise the existing entity with that id is replaced.

mod matching;
mod roi;
mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::catalog::{is_block_path, TemplateCatalog};
use crate::engine::Engine;

pub use matching::{match_pipelines, PipelineMatch};
pub use roi::{breakeven_uses, RoiError};
pub use store::{RegistryStore, WriteLock};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("entity `{0}` not found")]
    NotFound(String),
    #[error("a {kind} named `{name}` already exists")]
    DuplicateName { kind: EntityKind, name: String },
    #[error("`{id}` is still referenced by {}", referrers.join(", "))]
    ReferentialIntegrity { id: String, referrers: Vec<String> },
    #[error("{field} refers to missing entity `{id}`")]
    DanglingReference { field: &'static str, id: String },
    #[error("invalid {kind}: {reason}")]
    Invalid { kind: EntityKind, reason: String },
    #[error("no catalog group matches languages {0:?}")]
    NoTemplatesMatched(Vec<String>),
    #[error("registry is locked by another writer ({0})")]
    Busy(PathBuf),
    #[error("registry file {path} is unreadable: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("registry i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityKind {
    Application,
    Repository,
    CiEngine,
    CiPipeline,
}

impl EntityKind {
    pub const ALL: [EntityKind; 4] = [
        EntityKind::Application,
        EntityKind::Repository,
        EntityKind::CiEngine,
        EntityKind::CiPipeline,
    ];

    fn prefix(self) -> &'static str {
        match self {
            EntityKind::Application => "app",
            EntityKind::Repository => "repo",
            EntityKind::CiEngine => "engine",
            EntityKind::CiPipeline => "pipeline",
        }
    }

    fn of_id(id: &str) -> Option<EntityKind> {
        let (prefix, n) = id.rsplit_once('-')?;
        n.parse::<u64>().ok()?;
        EntityKind::ALL.into_iter().find(|k| k.prefix() == prefix)
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Application => "application",
            EntityKind::Repository => "repository",
            EntityKind::CiEngine => "CI engine",
            EntityKind::CiPipeline => "CI pipeline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Requirements {
    pub lint_required: bool,
    pub coverage_target: f64,
    pub security_scan_required: bool,
}

impl Default for Requirements {
    fn default() -> Self {
        Requirements {
            lint_required: true,
            coverage_target: 0.0,
            security_scan_required: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Application {
    #[serde(default)]
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub requirements: Requirements,
    #[serde(default)]
    pub repository_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Repository {
    #[serde(default)]
    pub id: String,
    pub name: String,
    /// Remote URL or local working-tree path.
    #[serde(default)]
    pub location: String,
    #[serde(default)]
    pub languages: Vec<String>,
    #[serde(default)]
    pub toolchains: Vec<String>,
    #[serde(default)]
    pub engine_id: Option<String>,
    #[serde(default)]
    pub application_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiEngine {
    #[serde(default)]
    pub id: String,
    pub name: String,
    pub kind: Engine,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CiPipeline {
    #[serde(default)]
    pub id: String,
    pub repository_id: String,
    pub engine_id: String,
    /// Block paths (`go/lint/vet`) or group names (`go`).
    #[serde(default)]
    pub template_refs: Vec<String>,
    /// Seal digest of the last rendered output.
    #[serde(default)]
    pub rendered_digest: Option<String>,
    #[serde(default)]
    pub catalog_version: String,
}

impl CiPipeline {
    /// Whether this pipeline uses `template`, a block path or group name.
    /// Group references are expanded through `catalog`.
    pub fn uses_template(&self, template: &str, catalog: Option<&TemplateCatalog>) -> bool {
        self.template_refs.iter().any(|r| {
            r == template
                || (!is_block_path(r)
                    && catalog
                        .and_then(|c| c.groups.get(r))
                        .is_some_and(|g| g.blocks.iter().any(|b| b == template)))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Entity {
    Application(Application),
    Repository(Repository),
    CiEngine(CiEngine),
    CiPipeline(CiPipeline),
}

impl Entity {
    pub fn kind(&self) -> EntityKind {
        match self {
            Entity::Application(_) => EntityKind::Application,
            Entity::Repository(_) => EntityKind::Repository,
            Entity::CiEngine(_) => EntityKind::CiEngine,
            Entity::CiPipeline(_) => EntityKind::CiPipeline,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Entity::Application(e) => &e.id,
            Entity::Repository(e) => &e.id,
            Entity::CiEngine(e) => &e.id,
            Entity::CiPipeline(e) => &e.id,
        }
    }

    fn set_id(&mut self, id: String) {
        match self {
            Entity::Application(e) => e.id = id,
            Entity::Repository(e) => e.id = id,
            Entity::CiEngine(e) => e.id = id,
            Entity::CiPipeline(e) => e.id = id,
        }
    }

    fn name(&self) -> Option<&str> {
        match self {
            Entity::Application(e) => Some(&e.name),
            Entity::Repository(e) => Some(&e.name),
            Entity::CiEngine(e) => Some(&e.name),
            Entity::CiPipeline(_) => None,
        }
    }
}

/// Optional filters for [`Registry::list`]. Each applies only to kinds that
/// carry the field.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListFilter {
    pub application_id: Option<String>,
    pub repository_id: Option<String>,
    pub engine_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub schema_version: u32,
    pub next_id: u64,
    pub applications: Vec<Application>,
    pub repositories: Vec<Repository>,
    pub ci_engines: Vec<CiEngine>,
    pub ci_pipelines: Vec<CiPipeline>,
}

impl Default for Registry {
    fn default() -> Self {
        Registry {
            schema_version: SCHEMA_VERSION,
            next_id: 1,
            applications: Vec::new(),
            repositories: Vec::new(),
            ci_engines: Vec::new(),
            ci_pipelines: Vec::new(),
        }
    }
}

fn invalid(kind: EntityKind, reason: impl Into<String>) -> RegistryError {
    RegistryError::Invalid {
        kind,
        reason: reason.into(),
    }
}

impl Registry {
    pub fn application(&self, id: &str) -> Option<&Application> {
        self.applications.iter().find(|e| e.id == id)
    }

    pub fn repository(&self, id: &str) -> Option<&Repository> {
        self.repositories.iter().find(|e| e.id == id)
    }

    pub fn engine(&self, id: &str) -> Option<&CiEngine> {
        self.ci_engines.iter().find(|e| e.id == id)
    }

    pub fn pipeline(&self, id: &str) -> Option<&CiPipeline> {
        self.ci_pipelines.iter().find(|e| e.id == id)
    }

    fn exists(&self, id: &str) -> bool {
        self.get(id).is_ok()
    }

    pub fn get(&self, id: &str) -> Result<Entity, RegistryError> {
        let not_found = || RegistryError::NotFound(id.to_string());
        match EntityKind::of_id(id).ok_or_else(not_found)? {
            EntityKind::Application => self.application(id).cloned().map(Entity::Application),
            EntityKind::Repository => self.repository(id).cloned().map(Entity::Repository),
            EntityKind::CiEngine => self.engine(id).cloned().map(Entity::CiEngine),
            EntityKind::CiPipeline => self.pipeline(id).cloned().map(Entity::CiPipeline),
        }
        .ok_or_else(not_found)
    }

    pub fn list(&self, kind: EntityKind, filter: &ListFilter) -> Vec<Entity> {
        let eq = |want: &Option<String>, have: Option<&String>| {
            want.as_ref().is_none_or(|w| have == Some(w))
        };
        match kind {
            EntityKind::Application => self
                .applications
                .iter()
                .cloned()
                .map(Entity::Application)
                .collect(),
            EntityKind::CiEngine => self.ci_engines.iter().cloned().map(Entity::CiEngine).collect(),
            EntityKind::Repository => self
                .repositories
                .iter()
                .filter(|r| eq(&filter.engine_id, r.engine_id.as_ref()))
                .filter(|r| {
                    filter
                        .application_id
                        .as_ref()
                        .is_none_or(|app| self.repository_linked_to(r, app))
                })
                .cloned()
                .map(Entity::Repository)
                .collect(),
            EntityKind::CiPipeline => self
                .ci_pipelines
                .iter()
                .filter(|p| eq(&filter.repository_id, Some(&p.repository_id)))
                .filter(|p| eq(&filter.engine_id, Some(&p.engine_id)))
                .cloned()
                .map(Entity::CiPipeline)
                .collect(),
        }
    }

    /// A repository is linked to an application through either side of the
    /// relation.
    pub fn repository_linked_to(&self, repo: &Repository, application_id: &str) -> bool {
        repo.application_id.as_deref() == Some(application_id)
            || self
                .application(application_id)
                .is_some_and(|a| a.repository_ids.contains(&repo.id))
    }

    pub fn pipelines_using<'a>(
        &'a self,
        template: &'a str,
        catalog: Option<&'a TemplateCatalog>,
    ) -> impl Iterator<Item = &'a CiPipeline> + 'a {
        self.ci_pipelines
            .iter()
            .filter(move |p| p.uses_template(template, catalog))
    }

    fn check(&self, entity: &Entity) -> Result<(), RegistryError> {
        let kind = entity.kind();
        if let Some(name) = entity.name() {
            if name.trim().is_empty() {
                return Err(invalid(kind, "name must not be empty"));
            }
            let clash = self
                .list(kind, &ListFilter::default())
                .iter()
                .any(|e| e.id() != entity.id() && e.name() == Some(name));
            if clash {
                return Err(RegistryError::DuplicateName {
                    kind,
                    name: name.to_string(),
                });
            }
        }
        let resolve = |field: &'static str, id: &str, want: EntityKind| {
            if EntityKind::of_id(id) == Some(want) && self.exists(id) {
                Ok(())
            } else {
                Err(RegistryError::DanglingReference {
                    field,
                    id: id.to_string(),
                })
            }
        };
        match entity {
            Entity::Application(app) => {
                let target = app.requirements.coverage_target;
                if !(0.0..=100.0).contains(&target) {
                    return Err(invalid(kind, format!("coverage_target {target} outside [0, 100]")));
                }
                for id in &app.repository_ids {
                    resolve("repository_ids", id, EntityKind::Repository)?;
                }
            }
            Entity::Repository(repo) => {
                if let Some(id) = &repo.engine_id {
                    resolve("engine_id", id, EntityKind::CiEngine)?;
                }
                if let Some(id) = &repo.application_id {
                    resolve("application_id", id, EntityKind::Application)?;
                }
            }
            Entity::CiEngine(_) => {}
            Entity::CiPipeline(p) => {
                resolve("repository_id", &p.repository_id, EntityKind::Repository)?;
                resolve("engine_id", &p.engine_id, EntityKind::CiEngine)?;
                if p.template_refs.iter().any(|r| r.trim().is_empty()) {
                    return Err(invalid(kind, "template_refs must not contain empty entries"));
                }
                if let Some(d) = &p.rendered_digest {
                    let hex = d.len() == 64 && d.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
                    if !hex {
                        return Err(invalid(kind, "rendered_digest must be 64 lowercase hex digits"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Creates (empty id) or replaces (existing id) an entity; returns its id.
    pub fn upsert(&mut self, mut entity: Entity) -> Result<String, RegistryError> {
        let kind = entity.kind();
        let creating = entity.id().is_empty();
        if !creating {
            let known = EntityKind::of_id(entity.id()) == Some(kind) && self.exists(entity.id());
            if !known {
                return Err(RegistryError::NotFound(entity.id().to_string()));
            }
        }
        self.check(&entity)?;
        if creating {
            let id = format!("{}-{}", kind.prefix(), self.next_id);
            self.next_id += 1;
            entity.set_id(id);
        }
        let id = entity.id().to_string();
        fn put<T>(items: &mut Vec<T>, item: T, id: &str, id_of: impl Fn(&T) -> &str) {
            match items.iter_mut().find(|e| id_of(e) == id) {
                Some(slot) => *slot = item,
                None => items.push(item),
            }
        }
        match entity {
            Entity::Application(e) => put(&mut self.applications, e, &id, |e| &e.id),
            Entity::Repository(e) => put(&mut self.repositories, e, &id, |e| &e.id),
            Entity::CiEngine(e) => put(&mut self.ci_engines, e, &id, |e| &e.id),
            Entity::CiPipeline(e) => put(&mut self.ci_pipelines, e, &id, |e| &e.id),
        }
        Ok(id)
    }

    /// Ids of entities that reference `id`, sorted.
    pub fn referrers(&self, id: &str) -> Vec<String> {
        let mut out = BTreeSet::new();
        for a in &self.applications {
            if a.repository_ids.iter().any(|r| r == id) {
                out.insert(a.id.clone());
            }
        }
        for r in &self.repositories {
            if r.engine_id.as_deref() == Some(id) || r.application_id.as_deref() == Some(id) {
                out.insert(r.id.clone());
            }
        }
        for p in &self.ci_pipelines {
            if p.repository_id == id || p.engine_id == id {
                out.insert(p.id.clone());
            }
        }
        out.into_iter().collect()
    }

    pub fn delete(&mut self, id: &str) -> Result<(), RegistryError> {
        let kind = self.get(id)?.kind();
        let referrers = self.referrers(id);
        if !referrers.is_empty() {
            return Err(RegistryError::ReferentialIntegrity {
                id: id.to_string(),
                referrers,
            });
        }
        match kind {
            EntityKind::Application => self.applications.retain(|e| e.id != id),
            EntityKind::Repository => self.repositories.retain(|e| e.id != id),
            EntityKind::CiEngine => self.ci_engines.retain(|e| e.id != id),
            EntityKind::CiPipeline => self.ci_pipelines.retain(|e| e.id != id),
        }
        Ok(())
    }

    /// References that do not resolve. Empty for any registry built through
    /// `upsert`/`delete`.
    pub fn dangling_references(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut expect = |owner: &str, target: &str, kind: EntityKind| {
            if EntityKind::of_id(target) != Some(kind) || !self.exists(target) {
                out.push((owner.to_string(), target.to_string()));
            }
        };
        for a in &self.applications {
            for r in &a.repository_ids {
                expect(&a.id, r, EntityKind::Repository);
            }
        }
        for r in &self.repositories {
            if let Some(e) = &r.engine_id {
                expect(&r.id, e, EntityKind::CiEngine);
            }
            if let Some(a) = &r.application_id {
                expect(&r.id, a, EntityKind::Application);
            }
        }
        for p in &self.ci_pipelines {
            expect(&p.id, &p.repository_id, EntityKind::Repository);
            expect(&p.id, &p.engine_id, EntityKind::CiEngine);
        }
        out
    }
}
