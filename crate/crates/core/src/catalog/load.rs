use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use super::{CatalogError, TemplateBlock, TemplateCatalog, TemplateGroup};

/// Version selector naming the greatest version directory.
pub const LATEST: &str = "latest";

const GROUPS_DIR: &str = "groups";

/// Natural ordering of dotted versions: numeric components compare as
/// numbers, so `1.10` sorts after `1.2`.
pub fn compare_versions(a: &str, b: &str) -> Ordering {
    let mut left = a.split('.');
    let mut right = b.split('.');
    loop {
        match (left.next(), right.next()) {
            (None, None) => return a.cmp(b),
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) => {
                let ord = match (x.parse::<u64>(), y.parse::<u64>()) {
                    (Ok(m), Ok(n)) => m.cmp(&n),
                    (Ok(_), Err(_)) => Ordering::Less,
                    (Err(_), Ok(_)) => Ordering::Greater,
                    (Err(_), Err(_)) => x.cmp(y),
                };
                if ord != Ordering::Equal {
                    return ord;
                }
            }
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Maps a selector to an existing version directory name.
pub fn resolve_version(root: &Path, selector: &str) -> Result<String, CatalogError> {
    if !root.is_dir() {
        return Err(CatalogError::CatalogNotFound(root.to_path_buf()));
    }
    let not_found = || CatalogError::VersionNotFound {
        root: root.to_path_buf(),
        version: selector.to_string(),
    };
    if selector != LATEST {
        return if !selector.is_empty() && !selector.contains(['/', '\\']) && root.join(selector).is_dir() {
            Ok(selector.to_string())
        } else {
            Err(not_found())
        };
    }
    let mut versions = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_dir() && !name.starts_with('.') {
            versions.push(name);
        }
    }
    versions
        .into_iter()
        .max_by(|a, b| compare_versions(a, b))
        .ok_or_else(not_found)
}

/// Loads `<root>/<version>/`. Files that do not parse as blocks or groups
/// are errors; structural problems are left to `validate_catalog`.
pub fn load_catalog(root: &Path, selector: &str) -> Result<TemplateCatalog, CatalogError> {
    let version = resolve_version(root, selector)?;
    let base = root.join(&version);
    let mut blocks = BTreeMap::new();
    let mut groups = BTreeMap::new();

    for entry in WalkDir::new(&base).follow_links(false).sort_by_file_name() {
        let entry = entry.map_err(|err| CatalogError::Io {
            path: err.path().map(Path::to_path_buf).unwrap_or_else(|| base.clone()),
            source: err.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = logical_path(&base, entry.path());
        let Some(logical) = rel.strip_suffix(".yml") else {
            continue;
        };
        let text = fs::read_to_string(entry.path()).map_err(io_err(entry.path()))?;
        if let Some(name) = logical.strip_prefix("groups/") {
            let group: TemplateGroup =
                serde_yaml::from_str(&text).map_err(|e| CatalogError::MalformedGroup {
                    path: logical.to_string(),
                    reason: e.to_string(),
                })?;
            groups.insert(name.to_string(), group);
        } else if logical != GROUPS_DIR {
            let block: TemplateBlock =
                serde_yaml::from_str(&text).map_err(|e| CatalogError::MalformedBlock {
                    path: logical.to_string(),
                    reason: e.to_string(),
                })?;
            blocks.insert(logical.to_string(), block);
        }
    }

    Ok(TemplateCatalog {
        version,
        blocks,
        groups,
    })
}

fn logical_path(base: &Path, path: &Path) -> String {
    let rel: PathBuf = path.strip_prefix(base).unwrap_or(path).to_path_buf();
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}
