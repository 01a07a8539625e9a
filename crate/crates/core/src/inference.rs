//! Golden-path selection: facts + catalog → engine-agnostic pipeline plan.
//!
//! Rules applied by [`plan_pipeline`]:
//!
//! * every detected language that has a catalog group contributes that
//!   group's blocks; test-stage members only when test evidence covers the
//!   language;
//! * each detected IaC kind adds its misconfiguration scanner (sast);
//! * dependency manifests add composition analysis (sca), one job per
//!   manifest or a single job, depending on policy.
//!
//! Jobs are ordered by canonical stage, and within a stage by the order in
//! which groups list them (groups taken in name order of their language).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{validate_catalog, BlockRef, CatalogError, TemplateCatalog};
use crate::engine::Engine;
use crate::findings::{has_errors, Finding};
use crate::scanner::{FactSet, IacKind};
use crate::stage::{Stage, UnknownStage};
use crate::yaml;

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("no catalog group for language `{0}`")]
    NoCatalogGroup(String),
    #[error("catalog {version} is invalid ({} error findings)", findings.iter().filter(|f| f.is_error()).count())]
    InvalidCatalog {
        version: String,
        findings: Vec<Finding>,
    },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanPolicy {
    /// Report blocks whose GitHub body runs shell commands.
    pub forbid_shell: bool,
    pub sca_per_manifest: bool,
    /// Values for any block parameter of the same name.
    pub default_params: BTreeMap<String, String>,
    /// Error instead of a diagnostic when a language has no group.
    pub strict: bool,
    /// Stages dropped from the plan (application requirements).
    pub exclude_stages: BTreeSet<Stage>,
    pub sca_block: String,
    pub iac_blocks: BTreeMap<IacKind, String>,
}

impl Default for PlanPolicy {
    fn default() -> Self {
        PlanPolicy {
            forbid_shell: false,
            sca_per_manifest: true,
            default_params: BTreeMap::new(),
            strict: false,
            exclude_stages: BTreeSet::new(),
            sca_block: "sca/dependency-scan".into(),
            iac_blocks: [(IacKind::Terraform, "sast/tfsec".to_string())].into(),
        }
    }
}

/// Parameter the composition-analysis block receives with the manifest path.
pub const SCA_TARGET_PARAM: &str = "target";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedJob {
    /// Job name in rendered output; unique within a plan.
    pub id: String,
    pub block: BlockRef,
    pub stage: Stage,
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelinePlan {
    pub catalog_version: String,
    pub source_facts: String,
    pub stages: Vec<Stage>,
    pub jobs: Vec<PlannedJob>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl PipelinePlan {
    pub fn to_yaml(&self) -> String {
        yaml::to_canonical_yaml(self).expect("plans always serialize")
    }

    pub fn digest(&self) -> String {
        crate::integrity::sha256_hex(self.to_yaml().as_bytes())
    }

    pub fn jobs_in(&self, stage: Stage) -> impl Iterator<Item = &PlannedJob> {
        self.jobs.iter().filter(move |j| j.stage == stage)
    }

    /// Job ids per used stage, in plan order.
    pub fn summary(&self) -> BTreeMap<Stage, Vec<String>> {
        let mut out: BTreeMap<Stage, Vec<String>> = BTreeMap::new();
        for job in &self.jobs {
            out.entry(job.stage).or_default().push(job.id.clone());
        }
        out
    }
}

/// Job id for a block path: characters outside `[A-Za-z0-9_-]` become `-`.
pub fn job_id(path: &str) -> String {
    path.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

/// Canonical order restricted to `stage_names`.
pub fn stage_order<S: AsRef<str>>(stage_names: &[S]) -> Result<Vec<Stage>, UnknownStage> {
    let stages = stage_names
        .iter()
        .map(|s| s.as_ref().parse::<Stage>())
        .collect::<Result<BTreeSet<_>, _>>()?;
    Ok(stages.into_iter().collect())
}

struct Candidate {
    id: String,
    path: String,
    overrides: BTreeMap<String, String>,
}

pub fn plan_pipeline(
    facts: &FactSet,
    catalog: &TemplateCatalog,
    policy: &PlanPolicy,
) -> Result<PipelinePlan, PlanError> {
    let findings = validate_catalog(catalog);
    if has_errors(&findings) {
        return Err(PlanError::InvalidCatalog {
            version: catalog.version.clone(),
            findings,
        });
    }

    let mut diagnostics = Vec::new();
    let mut candidates = Vec::new();
    let iac_languages: BTreeSet<&str> = facts.iac.iter().map(|k| k.language()).collect();

    for language in facts.languages.keys() {
        let Some(group) = catalog.group_for_language(language) else {
            if iac_languages.contains(language.as_str()) {
                continue;
            }
            if policy.strict {
                return Err(PlanError::NoCatalogGroup(language.clone()));
            }
            diagnostics.push(format!("no golden path for language {language}"));
            continue;
        };
        let tested = facts.tests.iter().any(|t| t.covers(language));
        for path in &group.blocks {
            let block = catalog.block(path).expect("validated group member");
            if block.stage() == Some(Stage::Test) && !tested {
                continue;
            }
            candidates.push(Candidate {
                id: job_id(path),
                path: path.clone(),
                overrides: BTreeMap::new(),
            });
        }
    }

    for kind in &facts.iac {
        match policy.iac_blocks.get(kind) {
            Some(path) if catalog.block(path).is_some() => candidates.push(Candidate {
                id: job_id(path),
                path: path.clone(),
                overrides: BTreeMap::new(),
            }),
            _ => diagnostics.push(format!("no scanner block for {} files", kind.id())),
        }
    }

    if !facts.manifests.is_empty() {
        let sca_path = &policy.sca_block;
        if catalog.block(sca_path).is_none() {
            diagnostics.push(format!("composition analysis block {sca_path} not in catalog"));
        } else if policy.sca_per_manifest {
            for manifest in &facts.manifests {
                candidates.push(Candidate {
                    id: format!("sca-{}", manifest.id()),
                    path: sca_path.clone(),
                    overrides: [(SCA_TARGET_PARAM.to_string(), manifest.file_name().to_string())]
                        .into(),
                });
            }
        } else {
            candidates.push(Candidate {
                id: job_id(sca_path),
                path: sca_path.clone(),
                overrides: BTreeMap::new(),
            });
        }
    }

    let mut seen = BTreeSet::new();
    let mut jobs = Vec::new();
    for candidate in candidates {
        if !seen.insert(candidate.id.clone()) {
            continue;
        }
        let block = catalog.block(&candidate.path).expect("candidate resolved above");
        let stage = block.stage().expect("validated stage");
        if policy.exclude_stages.contains(&stage) {
            continue;
        }
        let mut supplied: BTreeMap<String, String> = block
            .params
            .iter()
            .filter_map(|p| {
                policy
                    .default_params
                    .get(&p.name)
                    .map(|v| (p.name.clone(), v.clone()))
            })
            .collect();
        supplied.extend(candidate.overrides);
        let params = block.resolve_params(&supplied)?;
        if policy.forbid_shell && block.body(Engine::Github).is_some_and(body_requires_shell) {
            diagnostics.push(format!("{} runs shell commands on github", candidate.path));
        }
        jobs.push(PlannedJob {
            id: candidate.id,
            block: catalog.block_ref(&candidate.path),
            stage,
            params,
        });
    }
    // stable: keeps group order inside a stage
    jobs.sort_by_key(|j| j.stage);

    let stages: Vec<Stage> = jobs
        .iter()
        .map(|j| j.stage)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if jobs.is_empty() {
        diagnostics.push("no golden path matched".to_string());
    }

    Ok(PipelinePlan {
        catalog_version: catalog.version.clone(),
        source_facts: facts.digest(),
        stages,
        jobs,
        diagnostics,
    })
}

/// Whether a GitHub job body uses `run` (shell execution) anywhere.
pub fn body_requires_shell(body: &str) -> bool {
    fn walk(value: &serde_yaml::Value) -> bool {
        match value {
            serde_yaml::Value::Mapping(map) => map
                .iter()
                .any(|(k, v)| k.as_str() == Some("run") || walk(v)),
            serde_yaml::Value::Sequence(items) => items.iter().any(walk),
            serde_yaml::Value::Tagged(tagged) => walk(&tagged.value),
            _ => false,
        }
    }
    // Bodies that do not parse are treated as shell-requiring.
    serde_yaml::from_str::<serde_yaml::Value>(body).map_or(true, |v| walk(&v))
}
