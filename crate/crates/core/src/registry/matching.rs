use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Application, CiEngine, CiPipeline, RegistryError, Repository};
use crate::catalog::TemplateCatalog;
use crate::stage::Stage;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PipelineMatch {
    /// Unsaved pipelines (empty ids), one per matched language.
    pub pipelines: Vec<CiPipeline>,
    pub findings: Vec<String>,
}

/// Selects catalog templates for `repo` on `engine`.
///
/// Each repository language with a catalog group yields one pipeline that
/// references the group by name. When the application does not require
/// linting, the group's lint members are dropped and the remaining blocks
/// are listed individually instead.
pub fn match_pipelines(
    repo: &Repository,
    app: Option<&Application>,
    catalog: &TemplateCatalog,
    engine: &CiEngine,
    strict: bool,
) -> Result<PipelineMatch, RegistryError> {
    let mut out = PipelineMatch::default();
    let mut seen = BTreeSet::new();
    let mut unmatched = Vec::new();
    let lint_required = app.is_none_or(|a| a.requirements.lint_required);
    let security_required = app.is_some_and(|a| a.requirements.security_scan_required);

    for language in &repo.languages {
        if !seen.insert(language.as_str()) {
            continue;
        }
        let Some(group) = catalog.group_for_language(language) else {
            unmatched.push(language.clone());
            continue;
        };
        let stage_of = |path: &str| catalog.block(path).and_then(|b| b.stage());
        let kept: Vec<&String> = group
            .blocks
            .iter()
            .filter(|path| lint_required || stage_of(path) != Some(Stage::Lint))
            .collect();
        if security_required && !kept.iter().any(|p| stage_of(p) == Some(Stage::Sast)) {
            out.findings.push(format!(
                "group {} has no sast block but the application requires a security scan",
                group.name
            ));
        }
        let template_refs = if kept.len() == group.blocks.len() {
            vec![group.name.clone()]
        } else {
            kept.into_iter().cloned().collect()
        };
        out.pipelines.push(CiPipeline {
            id: String::new(),
            repository_id: repo.id.clone(),
            engine_id: engine.id.clone(),
            template_refs,
            rendered_digest: None,
            catalog_version: catalog.version.clone(),
        });
    }

    if out.pipelines.is_empty() {
        if strict {
            return Err(RegistryError::NoTemplatesMatched(repo.languages.clone()));
        }
        out.findings.push("no templates matched".to_string());
    }
    for language in unmatched {
        out.findings.push(format!("no catalog group for language {language}"));
    }
    Ok(out)
}
