//! Versioned golden-path template catalogs.
//!
//! On disk a catalog is a directory per version:
//!
//! ```text
//! <root>/<version>/<language>/<stage>/<name>.yml   language-specific block
//! <root>/<version>/<stage>/<name>.yml              cross-language block (sast, sca)
//! <root>/<version>/groups/<name>.yml               golden path for one language
//! ```
//!
//! A block file declares its stage, its parameters and one body per engine.
//! Bodies are YAML job fragments with `${param}` placeholders. CI variables
//! inside bodies use the `$NAME` form, which is never substituted.

mod load;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize};

use crate::engine::Engine;
use crate::stage::Stage;
use crate::yaml;

pub use load::{compare_versions, load_catalog, resolve_version, LATEST};
pub use validate::validate_catalog;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog root not found: {0}")]
    CatalogNotFound(PathBuf),
    #[error("catalog version `{version}` not found under {root}")]
    VersionNotFound { root: PathBuf, version: String },
    #[error("malformed block {path}: {reason}")]
    MalformedBlock { path: String, reason: String },
    #[error("malformed group {path}: {reason}")]
    MalformedGroup { path: String, reason: String },
    #[error("group `{0}` not found")]
    GroupNotFound(String),
    #[error("block `{block}` has no {engine} body")]
    EngineUnsupported { block: String, engine: Engine },
    #[error("block `{block}` requires parameter `{name}`")]
    MissingParam { block: String, name: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Identifies a block inside a versioned catalog.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockRef {
    pub version: String,
    pub path: String,
}

impl BlockRef {
    pub fn new(version: impl Into<String>, path: impl Into<String>) -> Self {
        BlockRef {
            version: version.into(),
            path: path.into(),
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.version.is_empty() && is_block_path(&self.path)
    }
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.path, self.version)
    }
}

/// At least two slash-separated segments, none empty.
pub fn is_block_path(path: &str) -> bool {
    let mut segments = 0;
    for segment in path.split('/') {
        if segment.is_empty() {
            return false;
        }
        segments += 1;
    }
    segments >= 2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Param {
    pub name: String,
    #[serde(default, deserialize_with = "scalar_string")]
    pub default: Option<String>,
    #[serde(default)]
    pub required: bool,
}

fn scalar_string<'de, D: Deserializer<'de>>(de: D) -> Result<Option<String>, D::Error> {
    use serde::de::Error;
    let value = Option::<serde_yaml::Value>::deserialize(de)?;
    match value {
        None | Some(serde_yaml::Value::Null) => Ok(None),
        Some(serde_yaml::Value::String(s)) => Ok(Some(s)),
        Some(serde_yaml::Value::Number(n)) => Ok(Some(n.to_string())),
        Some(serde_yaml::Value::Bool(b)) => Ok(Some(b.to_string())),
        Some(_) => Err(D::Error::custom("parameter default must be a scalar")),
    }
}

/// A reusable CI job template. The stage is kept as authored so that
/// validation can report bad values; [`TemplateBlock::stage`] parses it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateBlock {
    pub name: String,
    #[serde(rename = "stage")]
    pub stage_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default)]
    pub params: Vec<Param>,
    #[serde(default)]
    pub engines: BTreeMap<String, String>,
}

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("valid regex"))
}

/// Names of the `${param}` placeholders in `body`, in order of appearance.
pub fn placeholders(body: &str) -> Vec<&str> {
    placeholder_regex()
        .captures_iter(body)
        .map(|c| c.get(1).map_or("", |m| m.as_str()))
        .collect()
}

impl TemplateBlock {
    pub fn stage(&self) -> Option<Stage> {
        self.stage_name.parse().ok()
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn body(&self, engine: Engine) -> Option<&str> {
        self.engines.get(engine.as_str()).map(String::as_str)
    }

    /// Values for every declared parameter: supplied value, else default,
    /// else empty for optional parameters.
    pub fn resolve_params(
        &self,
        supplied: &BTreeMap<String, String>,
    ) -> Result<BTreeMap<String, String>, CatalogError> {
        let mut resolved = BTreeMap::new();
        for param in &self.params {
            let value = match (supplied.get(&param.name), &param.default) {
                (Some(v), _) => v.clone(),
                (None, Some(d)) => d.clone(),
                (None, None) if param.required => {
                    return Err(CatalogError::MissingParam {
                        block: self.name.clone(),
                        name: param.name.clone(),
                    })
                }
                (None, None) => String::new(),
            };
            resolved.insert(param.name.clone(), value);
        }
        Ok(resolved)
    }

    /// Canonical block file text. Loading a canonical file and writing it
    /// back reproduces it byte for byte.
    pub fn to_yaml(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("name: {}\n", yaml::scalar(&self.name)));
        out.push_str(&format!("stage: {}\n", yaml::scalar(&self.stage_name)));
        if let Some(lang) = &self.language {
            out.push_str(&format!("language: {}\n", yaml::scalar(lang)));
        }
        if self.params.is_empty() {
            out.push_str("params: []\n");
        } else {
            out.push_str("params:\n");
            for p in &self.params {
                out.push_str(&format!("  - name: {}\n", yaml::scalar(&p.name)));
                if let Some(d) = &p.default {
                    out.push_str(&format!("    default: {}\n", yaml::quoted(d)));
                }
                out.push_str(&format!("    required: {}\n", p.required));
            }
        }
        if self.engines.is_empty() {
            out.push_str("engines: {}\n");
        } else {
            out.push_str("engines:\n");
            for (engine, body) in &self.engines {
                out.push_str(&format!("  {}: ", yaml::scalar(engine)));
                if literal_block_safe(body) {
                    out.push_str("|\n");
                    out.push_str(&yaml::indent(body, 4));
                } else {
                    out.push_str(&yaml::quoted(body));
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Bodies that a clipped literal block (`|`) reproduces exactly.
fn literal_block_safe(body: &str) -> bool {
    body.ends_with('\n')
        && !body.ends_with("\n\n")
        && !body.starts_with([' ', '\n'])
        && !body.contains(['\r', '\t'])
        && body.lines().all(|l| l.trim_end() == l)
}

/// Substitutes every placeholder of `block`'s `engine` body.
pub fn render_block(
    block: &TemplateBlock,
    engine: Engine,
    params: &BTreeMap<String, String>,
) -> Result<String, CatalogError> {
    let body = block
        .body(engine)
        .ok_or_else(|| CatalogError::EngineUnsupported {
            block: block.name.clone(),
            engine,
        })?;
    let values = block.resolve_params(params)?;
    let mut missing = None;
    let rendered = placeholder_regex().replace_all(body, |caps: &regex::Captures<'_>| {
        let name = &caps[1];
        match values.get(name) {
            Some(v) => v.clone(),
            None => {
                missing.get_or_insert_with(|| name.to_string());
                String::new()
            }
        }
    });
    if let Some(name) = missing {
        return Err(CatalogError::MissingParam {
            block: block.name.clone(),
            name,
        });
    }
    Ok(rendered.into_owned())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateGroup {
    pub name: String,
    pub language: String,
    pub blocks: Vec<String>,
}

impl TemplateGroup {
    pub fn to_yaml(&self) -> String {
        let mut out = format!(
            "name: {}\nlanguage: {}\n",
            yaml::scalar(&self.name),
            yaml::scalar(&self.language)
        );
        if self.blocks.is_empty() {
            out.push_str("blocks: []\n");
        } else {
            out.push_str("blocks:\n");
            for b in &self.blocks {
                out.push_str(&format!("  - {}\n", yaml::scalar(b)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateCatalog {
    pub version: String,
    pub blocks: BTreeMap<String, TemplateBlock>,
    pub groups: BTreeMap<String, TemplateGroup>,
}

impl TemplateCatalog {
    pub fn block(&self, path: &str) -> Option<&TemplateBlock> {
        self.blocks.get(path)
    }

    pub fn block_ref(&self, path: &str) -> BlockRef {
        BlockRef::new(self.version.clone(), path)
    }

    pub fn resolve(&self, block: &BlockRef) -> Option<&TemplateBlock> {
        (block.version == self.version)
            .then(|| self.blocks.get(&block.path))
            .flatten()
    }

    /// First group (by name) serving `language`.
    pub fn group_for_language(&self, language: &str) -> Option<&TemplateGroup> {
        self.groups.values().find(|g| g.language == language)
    }

    pub fn expand_group(&self, group_name: &str) -> Result<Vec<BlockRef>, CatalogError> {
        let group = self
            .groups
            .get(group_name)
            .ok_or_else(|| CatalogError::GroupNotFound(group_name.to_string()))?;
        Ok(group.blocks.iter().map(|p| self.block_ref(p)).collect())
    }
}
