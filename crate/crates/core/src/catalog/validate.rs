use std::collections::BTreeSet;

use super::{is_block_path, placeholders, TemplateCatalog};
use crate::engine::Engine;
use crate::findings::{Finding, FindingCode};

/// Checks every block and group invariant. An empty result means the catalog
/// is valid. Findings are sorted by path.
pub fn validate_catalog(catalog: &TemplateCatalog) -> Vec<Finding> {
    let mut findings = Vec::new();

    for (path, block) in &catalog.blocks {
        let segments: Vec<&str> = path.split('/').collect();
        if !is_block_path(path) {
            findings.push(Finding::error(
                path,
                FindingCode::InvalidBlockRef,
                "block paths need at least two non-empty segments",
            ));
        }
        if segments.last() != Some(&block.name.as_str()) {
            findings.push(Finding::error(
                path,
                FindingCode::NameMismatch,
                format!("block name `{}` does not match its file name", block.name),
            ));
        }
        match block.stage() {
            None => findings.push(Finding::error(
                path,
                FindingCode::BadStage,
                format!("`{}` is not a canonical stage", block.stage_name),
            )),
            Some(stage) => {
                let layout_ok = match segments.as_slice() {
                    [lang, dir, _] => {
                        *dir == stage.as_str()
                            && block
                                .language
                                .as_ref()
                                .is_none_or(|l| l.eq_ignore_ascii_case(lang))
                    }
                    [dir, _] => *dir == stage.as_str() && stage.is_cross_language(),
                    _ => false,
                };
                if !layout_ok && is_block_path(path) {
                    findings.push(Finding::error(
                        path,
                        FindingCode::BadLayout,
                        format!(
                            "a {stage} block belongs at <language>/{stage}/<name>{}",
                            if stage.is_cross_language() {
                                format!(" or {stage}/<name>")
                            } else {
                                String::new()
                            }
                        ),
                    ));
                }
            }
        }
        if block.engines.is_empty() {
            findings.push(Finding::error(
                path,
                FindingCode::MissingEngineBody,
                "block has no engine body",
            ));
        }
        for engine in block.engines.keys() {
            if engine.parse::<Engine>().is_err() {
                findings.push(Finding::warning(
                    path,
                    FindingCode::UnknownEngine,
                    format!("body for unknown engine `{engine}` is ignored"),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for param in &block.params {
            if !seen.insert(param.name.as_str()) {
                findings.push(Finding::error(
                    path,
                    FindingCode::DuplicateParam,
                    format!("parameter `{}` declared twice", param.name),
                ));
            }
        }
        let undeclared: BTreeSet<&str> = block
            .engines
            .values()
            .flat_map(|body| placeholders(body))
            .filter(|name| block.param(name).is_none())
            .collect();
        for name in undeclared {
            findings.push(Finding::error(
                path,
                FindingCode::UndeclaredParam,
                format!("placeholder `${{{name}}}` has no declared parameter"),
            ));
        }
    }

    for (name, group) in &catalog.groups {
        let path = format!("groups/{name}");
        if &group.name != name {
            findings.push(Finding::error(
                &path,
                FindingCode::NameMismatch,
                format!("group name `{}` does not match its file name", group.name),
            ));
        }
        if group.blocks.is_empty() {
            findings.push(Finding::error(&path, FindingCode::EmptyGroup, "group lists no blocks"));
        }
        let mut seen = BTreeSet::new();
        for member in &group.blocks {
            if !seen.insert(member.as_str()) {
                findings.push(Finding::error(
                    &path,
                    FindingCode::DuplicateGroupMember,
                    format!("`{member}` is listed more than once"),
                ));
                continue;
            }
            if !is_block_path(member) {
                findings.push(Finding::error(
                    &path,
                    FindingCode::InvalidBlockRef,
                    format!("`{member}` is not a block path (groups may only list blocks)"),
                ));
            } else if !catalog.blocks.contains_key(member) {
                findings.push(Finding::error(
                    &path,
                    FindingCode::DanglingGroupRef,
                    format!("`{member}` does not resolve to a block"),
                ));
            }
        }
    }

    findings.sort();
    findings
}
