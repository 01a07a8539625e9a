//! The scan → plan → render flow shared by the CLI and the service.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pipeforge_core::catalog::CatalogError;
use pipeforge_core::inference::PlanError;
use pipeforge_core::registry::{CiPipeline, Entity, Registry, RegistryError, RegistryStore};
use pipeforge_core::renderer::RenderError;
use pipeforge_core::scanner::ScanError;
use pipeforge_core::{
    plan_pipeline, render, scan_repository, Engine, FactSet, PipelinePlan, PlanPolicy,
    RenderMode, RenderOptions, RenderedPipeline, ScanConfig, Stage, TemplateCatalog,
};
use serde::{Deserialize, Serialize};

/// Template project named in include-mode output unless overridden.
pub const DEFAULT_LOCATOR: &str = "ci-templates";

#[derive(Debug, thiserror::Error)]
pub enum ProvisionError {
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("repository {0} has no local location to scan")]
    NoLocation(String),
    #[error("repository {0} has no engine; pass engine_id")]
    NoEngine(String),
    #[error("repository_id {body} does not match {path}")]
    RepositoryMismatch { path: String, body: String },
    #[error("writing {path}: {source}")]
    WriteBack {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Everything that determines generated text apart from the repository tree.
#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub engine: Engine,
    pub mode: RenderMode,
    pub locator: String,
    pub forbid_shell: bool,
    pub strict: bool,
    pub exclude_stages: Vec<Stage>,
}

impl GenerateOptions {
    pub fn new(engine: Engine, mode: RenderMode) -> Self {
        GenerateOptions {
            engine,
            mode,
            locator: DEFAULT_LOCATOR.to_string(),
            forbid_shell: false,
            strict: false,
            exclude_stages: Vec::new(),
        }
    }

    pub fn policy(&self) -> PlanPolicy {
        PlanPolicy {
            forbid_shell: self.forbid_shell,
            strict: self.strict,
            exclude_stages: self.exclude_stages.iter().copied().collect(),
            ..PlanPolicy::default()
        }
    }

    fn render_options(&self) -> RenderOptions {
        RenderOptions {
            engine: self.engine,
            mode: self.mode,
            catalog_locator: self.locator.clone(),
            forbid_shell: self.forbid_shell,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub facts: FactSet,
    pub plan: PipelinePlan,
    pub rendered: RenderedPipeline,
}

pub fn plan_repository(
    path: &Path,
    catalog: &TemplateCatalog,
    options: &GenerateOptions,
) -> Result<(FactSet, PipelinePlan), ProvisionError> {
    let facts = scan_repository(path, &ScanConfig::default())?;
    let plan = plan_pipeline(&facts, catalog, &options.policy())?;
    Ok((facts, plan))
}

pub fn generate(
    path: &Path,
    catalog: &TemplateCatalog,
    options: &GenerateOptions,
) -> Result<Generated, ProvisionError> {
    let (facts, plan) = plan_repository(path, catalog, options)?;
    let rendered = render(&plan, &options.render_options(), catalog)?;
    Ok(Generated {
        facts,
        plan,
        rendered,
    })
}

/// Group names for blocks that came from a language group, block paths for
/// the rest, in plan order.
pub fn template_refs(plan: &PipelinePlan, facts: &FactSet, catalog: &TemplateCatalog) -> Vec<String> {
    let groups: Vec<_> = facts
        .languages
        .keys()
        .filter_map(|l| catalog.group_for_language(l))
        .collect();
    let mut refs: Vec<String> = Vec::new();
    for job in &plan.jobs {
        let r = groups
            .iter()
            .find(|g| g.blocks.contains(&job.block.path))
            .map_or_else(|| job.block.path.clone(), |g| g.name.clone());
        if !refs.contains(&r) {
            refs.push(r);
        }
    }
    refs
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProvisionRequest {
    pub repository_id: Option<String>,
    /// Defaults to the repository's engine.
    pub engine_id: Option<String>,
    pub mode: Option<RenderMode>,
    pub write_back: bool,
    pub forbid_shell: bool,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvisionResult {
    pub pipeline_id: String,
    pub sealed_text: String,
    pub summary: BTreeMap<Stage, Vec<String>>,
    pub catalog_version: String,
    pub diagnostics: Vec<String>,
    /// File written when `write_back` was set.
    pub written: Option<PathBuf>,
}

/// Generates the pipeline for a registered repository and records it.
/// An existing pipeline for the same repository and engine is replaced.
pub fn provision(
    store: &RegistryStore,
    catalog: &TemplateCatalog,
    repository_id: &str,
    request: &ProvisionRequest,
    locator: &str,
) -> Result<ProvisionResult, ProvisionError> {
    if let Some(body) = &request.repository_id {
        if body != repository_id {
            return Err(ProvisionError::RepositoryMismatch {
                path: repository_id.to_string(),
                body: body.clone(),
            });
        }
    }
    let registry = store.load()?;
    let repo = registry
        .repository(repository_id)
        .ok_or_else(|| RegistryError::NotFound(repository_id.to_string()))?
        .clone();
    let engine_id = request
        .engine_id
        .clone()
        .or_else(|| repo.engine_id.clone())
        .ok_or_else(|| ProvisionError::NoEngine(repo.id.clone()))?;
    let engine = registry
        .engine(&engine_id)
        .ok_or_else(|| RegistryError::NotFound(engine_id.clone()))?
        .clone();
    if repo.location.trim().is_empty() {
        return Err(ProvisionError::NoLocation(repo.id.clone()));
    }

    let mut options = GenerateOptions::new(engine.kind, request.mode.unwrap_or(RenderMode::Inline));
    options.locator = locator.to_string();
    options.forbid_shell = request.forbid_shell;
    options.strict = request.strict;
    options.exclude_stages = excluded_stages(&registry, &repo.id);

    let root = Path::new(&repo.location);
    let generated = generate(root, catalog, &options)?;
    let written = if request.write_back {
        let target = root.join(engine.kind.output_path());
        write_file(&target, &generated.rendered.text)?;
        Some(target)
    } else {
        None
    };

    let refs = template_refs(&generated.plan, &generated.facts, catalog);
    let digest = generated.rendered.digest();
    let (pipeline_id, _) = store.update(|reg| {
        let existing = reg
            .ci_pipelines
            .iter()
            .find(|p| p.repository_id == repo.id && p.engine_id == engine.id)
            .map(|p| p.id.clone());
        reg.upsert(Entity::CiPipeline(CiPipeline {
            id: existing.unwrap_or_default(),
            repository_id: repo.id.clone(),
            engine_id: engine.id.clone(),
            template_refs: refs.clone(),
            rendered_digest: Some(digest.clone()),
            catalog_version: catalog.version.clone(),
        }))
    })?;

    Ok(ProvisionResult {
        pipeline_id,
        sealed_text: generated.rendered.text,
        summary: generated.plan.summary(),
        catalog_version: catalog.version.clone(),
        diagnostics: generated.plan.diagnostics,
        written,
    })
}

/// Stages an application's requirements switch off for its repositories.
pub fn excluded_stages(registry: &Registry, repository_id: &str) -> Vec<Stage> {
    let Some(repo) = registry.repository(repository_id) else {
        return Vec::new();
    };
    let lint_optional = registry
        .applications
        .iter()
        .filter(|a| registry.repository_linked_to(repo, &a.id))
        .any(|a| !a.requirements.lint_required);
    if lint_optional {
        vec![Stage::Lint]
    } else {
        Vec::new()
    }
}

/// Overwrites `path`, creating parent directories.
pub fn write_file(path: &Path, text: &str) -> Result<(), ProvisionError> {
    let err = |source| ProvisionError::WriteBack {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(err)?;
    }
    fs::write(path, text).map_err(err)
}
