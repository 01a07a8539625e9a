//! Engine-specific pipeline text.
//!
//! Output is assembled line by line in a fixed order (generator comment,
//! stages, includes or jobs, per-job variables) and then sealed, so rendering
//! the same plan twice gives identical bytes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_yaml::Value;

use crate::catalog::{render_block, CatalogError, TemplateBlock, TemplateCatalog};
use crate::engine::Engine;
use crate::findings::{Finding, FindingCode};
use crate::inference::{body_requires_shell, job_id, PipelinePlan, PlannedJob};
use crate::integrity::{canonicalize, seal, sealed_digest};
use crate::yaml::{indent, quoted, scalar};
use crate::GENERATOR_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("block `{block}` requires shell execution, which policy forbids")]
    PolicyViolation { block: String },
    #[error("block `{block}` has no {engine} body")]
    EngineUnsupported { block: String, engine: Engine },
    #[error("plan references `{block}`, which is not in catalog {version}")]
    UnresolvedRef { block: String, version: String },
    #[error("include mode needs a catalog locator")]
    MissingLocator,
    #[error(transparent)]
    Block(#[from] CatalogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    /// Reference catalog files and pass parameters as variables.
    Include,
    /// Embed fully resolved job bodies.
    Inline,
}

impl RenderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RenderMode::Include => "include",
            RenderMode::Inline => "inline",
        }
    }
}

impl fmt::Display for RenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RenderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "include" => Ok(RenderMode::Include),
            "inline" => Ok(RenderMode::Inline),
            other => Err(format!("unknown mode `{other}` (expected include or inline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub engine: Engine,
    pub mode: RenderMode,
    /// Template project, optionally `project@ref`. Required in include mode.
    pub catalog_locator: String,
    pub forbid_shell: bool,
}

impl RenderOptions {
    pub fn new(engine: Engine, mode: RenderMode) -> Self {
        RenderOptions {
            engine,
            mode,
            catalog_locator: String::new(),
            forbid_shell: false,
        }
    }

    fn locator(&self) -> (&str, Option<&str>) {
        match self.catalog_locator.rsplit_once('@') {
            Some((project, r)) if !r.is_empty() => (project, Some(r)),
            _ => (self.catalog_locator.as_str(), None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPipeline {
    pub engine: Engine,
    pub text: String,
    pub plan_digest: String,
    pub generator_version: String,
}

impl RenderedPipeline {
    /// Digest recorded in the seal header.
    pub fn digest(&self) -> String {
        sealed_digest(&self.text).expect("rendered text is sealed")
    }
}

struct ResolvedJob<'a> {
    job: &'a PlannedJob,
    block: &'a TemplateBlock,
}

pub fn render(
    plan: &PipelinePlan,
    options: &RenderOptions,
    catalog: &TemplateCatalog,
) -> Result<RenderedPipeline, RenderError> {
    if options.mode == RenderMode::Include && options.catalog_locator.trim().is_empty() {
        return Err(RenderError::MissingLocator);
    }
    let engine = options.engine;
    let mut jobs = Vec::with_capacity(plan.jobs.len());
    for job in &plan.jobs {
        let block = catalog
            .resolve(&job.block)
            .ok_or_else(|| RenderError::UnresolvedRef {
                block: job.block.path.clone(),
                version: catalog.version.clone(),
            })?;
        let body = block
            .body(engine)
            .ok_or_else(|| RenderError::EngineUnsupported {
                block: job.block.path.clone(),
                engine,
            })?;
        if engine == Engine::Github && options.forbid_shell && body_requires_shell(body) {
            return Err(RenderError::PolicyViolation {
                block: job.block.path.clone(),
            });
        }
        jobs.push(ResolvedJob { job, block });
    }

    let mut out = format!(
        "# pipeforge-generator: {GENERATOR_VERSION}; catalog={}\n",
        plan.catalog_version
    );
    match engine {
        Engine::Gitlab => gitlab(&mut out, plan, &jobs, options)?,
        Engine::Github => github(&mut out, plan, &jobs, options)?,
    }

    Ok(RenderedPipeline {
        engine,
        text: seal(&out),
        plan_digest: plan.digest(),
        generator_version: GENERATOR_VERSION.to_string(),
    })
}

fn variables(out: &mut String, key: &str, job: &PlannedJob, width: usize) {
    if job.params.is_empty() {
        return;
    }
    let pad = " ".repeat(width);
    out.push_str(&format!("{pad}{key}:\n"));
    for (name, value) in &job.params {
        out.push_str(&format!("{pad}  {}: {}\n", scalar(name), quoted(value)));
    }
}

fn gitlab(
    out: &mut String,
    plan: &PipelinePlan,
    jobs: &[ResolvedJob<'_>],
    options: &RenderOptions,
) -> Result<(), RenderError> {
    if plan.stages.is_empty() {
        out.push_str("stages: []\n");
    } else {
        out.push_str("stages:\n");
        for stage in &plan.stages {
            out.push_str(&format!("  - {stage}\n"));
        }
    }

    if options.mode == RenderMode::Include && !jobs.is_empty() {
        let (project, git_ref) = options.locator();
        out.push_str("\ninclude:\n");
        let mut seen = BTreeSet::new();
        for r in jobs {
            let path = &r.job.block.path;
            if !seen.insert(path.as_str()) {
                continue;
            }
            out.push_str(&format!("  - project: {}\n", quoted(project)));
            if let Some(git_ref) = git_ref {
                out.push_str(&format!("    ref: {}\n", quoted(git_ref)));
            }
            out.push_str(&format!(
                "    file: {}\n",
                quoted(&format!("/{}/{path}.yml", r.job.block.version))
            ));
        }
    }

    for r in jobs {
        out.push_str(&format!("\n{}:\n  stage: {}\n", r.job.id, r.job.stage));
        match options.mode {
            RenderMode::Inline => {
                let body = render_block(r.block, Engine::Gitlab, &r.job.params)?;
                out.push_str(&indent(&body, 2));
            }
            RenderMode::Include => {
                out.push_str(&format!("  extends: .{}\n", job_id(&r.job.block.path)));
                variables(out, "variables", r.job, 2);
            }
        }
    }
    Ok(())
}

fn github(
    out: &mut String,
    plan: &PipelinePlan,
    jobs: &[ResolvedJob<'_>],
    options: &RenderOptions,
) -> Result<(), RenderError> {
    out.push_str("name: pipeforge\non:\n  push:\n  pull_request:\n");
    if jobs.is_empty() {
        out.push_str("jobs: {}\n");
        return Ok(());
    }
    out.push_str("jobs:\n");
    let (project, git_ref) = options.locator();
    let git_ref = git_ref.unwrap_or(&plan.catalog_version);
    for r in jobs {
        out.push_str(&format!("  {}:\n", r.job.id));
        // needs = every job of the closest earlier stage that has jobs
        let previous = plan
            .stages
            .iter().rfind(|s| **s < r.job.stage)
            .copied();
        if let Some(prev) = previous {
            out.push_str("    needs:\n");
            for dep in plan.jobs_in(prev) {
                out.push_str(&format!("      - {}\n", dep.id));
            }
        }
        match options.mode {
            RenderMode::Inline => {
                let body = render_block(r.block, Engine::Github, &r.job.params)?;
                out.push_str(&indent(&body, 4));
            }
            RenderMode::Include => {
                let uses = format!(
                    "{project}/.github/workflows/{}.yml@{git_ref}",
                    job_id(&r.job.block.path)
                );
                out.push_str(&format!("    uses: {}\n", quoted(&uses)));
                variables(out, "with", r.job, 4);
            }
        }
    }
    Ok(())
}

const GITLAB_RESERVED: &[&str] = &[
    "stages",
    "include",
    "variables",
    "default",
    "workflow",
    "image",
    "services",
    "cache",
    "before_script",
    "after_script",
];
const GITLAB_DEFAULT_STAGES: &[&str] = &[".pre", "build", "test", "deploy", ".post"];

/// Structural check of pipeline text (seal header ignored). An empty list
/// means the text is well formed for `engine`.
pub fn parse_check(text: &str, engine: Engine) -> Vec<Finding> {
    let body = canonicalize(text);
    let doc: Value = match serde_yaml::from_str(&body) {
        Ok(v) => v,
        Err(e) => {
            return vec![Finding::error(
                "<document>",
                FindingCode::ParseError,
                e.to_string(),
            )]
        }
    };
    let Value::Mapping(root) = doc else {
        return vec![Finding::error(
            "<document>",
            FindingCode::ParseError,
            "top level is not a mapping",
        )];
    };
    let mut findings = match engine {
        Engine::Gitlab => check_gitlab(&root),
        Engine::Github => check_github(&root),
    };
    findings.sort();
    findings
}

fn check_gitlab(root: &serde_yaml::Mapping) -> Vec<Finding> {
    let mut findings = Vec::new();
    let declared: Vec<String> = match root.get("stages") {
        None => GITLAB_DEFAULT_STAGES.iter().map(|s| s.to_string()).collect(),
        Some(Value::Sequence(items)) if items.iter().all(|i| i.is_string()) => items
            .iter()
            .filter_map(|i| i.as_str().map(str::to_owned))
            .collect(),
        Some(_) => {
            findings.push(Finding::error(
                "stages",
                FindingCode::MissingStages,
                "`stages` must be a list of names",
            ));
            return findings;
        }
    };
    for (key, value) in root {
        let Some(name) = key.as_str() else {
            findings.push(Finding::error("<document>", FindingCode::ParseError, "non-string top-level key"));
            continue;
        };
        if GITLAB_RESERVED.contains(&name) || name.starts_with('.') {
            continue;
        }
        let Value::Mapping(job) = value else {
            findings.push(Finding::error(name, FindingCode::ParseError, "job is not a mapping"));
            continue;
        };
        let stage = match job.get("stage") {
            None => Some("test"),
            Some(v) => v.as_str(),
        };
        match stage {
            Some(stage) if declared.iter().any(|d| d == stage) => {}
            Some(stage) => findings.push(Finding::error(
                name,
                FindingCode::UndeclaredStage,
                format!("stage `{stage}` is not declared in `stages`"),
            )),
            None => findings.push(Finding::error(name, FindingCode::ParseError, "stage is not a string")),
        }
    }
    findings
}

fn check_github(root: &serde_yaml::Mapping) -> Vec<Finding> {
    let Some(Value::Mapping(jobs)) = root.get("jobs") else {
        return vec![Finding::error(
            "jobs",
            FindingCode::MissingJobs,
            "workflow has no `jobs` mapping",
        )];
    };
    let mut findings = Vec::new();
    for (key, value) in jobs {
        let name = key.as_str().unwrap_or("<job>");
        let Value::Mapping(job) = value else {
            findings.push(Finding::error(name, FindingCode::ParseError, "job is not a mapping"));
            continue;
        };
        let needs: Vec<&Value> = match job.get("needs") {
            None => Vec::new(),
            Some(Value::Sequence(items)) => items.iter().collect(),
            Some(v) => vec![v],
        };
        for need in needs {
            let known = need.as_str().is_some_and(|n| jobs.contains_key(n));
            if !known {
                findings.push(Finding::error(
                    name,
                    FindingCode::UnknownNeed,
                    format!("needs `{}`, which is not a job", need.as_str().unwrap_or("?")),
                ));
            }
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_check_negatives() {
        let f = parse_check("jobs: [", Engine::Github);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].code, FindingCode::ParseError);

        let undeclared = "stages:\n  - build\nlint-job:\n  stage: lint\n  script: [x]\n";
        let f = parse_check(undeclared, Engine::Gitlab);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].code, FindingCode::UndeclaredStage);
        assert_eq!(f[0].path, "lint-job");

        let f = parse_check("name: x\non:\n  push:\n", Engine::Github);
        assert_eq!(f[0].code, FindingCode::MissingJobs);

        let f = parse_check("jobs:\n  a:\n    needs: [b]\n", Engine::Github);
        assert_eq!(f[0].code, FindingCode::UnknownNeed);
    }

    #[test]
    fn parse_check_accepts_defaults_and_hidden_jobs() {
        let text = ".tmpl:\n  stage: nowhere\nunit:\n  script: [make test]\nvariables:\n  A: \"1\"\n";
        assert!(parse_check(text, Engine::Gitlab).is_empty());
    }

    #[test]
    fn locator_splits_ref() {
        let mut o = RenderOptions::new(Engine::Gitlab, RenderMode::Include);
        o.catalog_locator = "platform/pipeline-blocks@main".into();
        assert_eq!(o.locator(), ("platform/pipeline-blocks", Some("main")));
        o.catalog_locator = "platform/pipeline-blocks".into();
        assert_eq!(o.locator(), ("platform/pipeline-blocks", None));
    }
}
