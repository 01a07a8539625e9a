#![allow(dead_code)]

pub mod crud_model;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use pipeforge_core::catalog::load_catalog;
use pipeforge_core::scanner::{IacKind, Manifest, TestEvidence};
use pipeforge_core::{FactSet, TemplateCatalog};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn catalog_root() -> PathBuf {
    fixtures().join("catalog")
}

pub fn fixture_catalog() -> TemplateCatalog {
    load_catalog(&catalog_root(), "1.0").expect("fixture catalog loads")
}

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against a committed golden file; `UPDATE_GOLDEN=1` rewrites it.
pub fn assert_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some_and(|v| !v.is_empty()) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

pub fn copy_tree(from: &Path, to: &Path) {
    for entry in walkdir::WalkDir::new(from) {
        let entry = entry.unwrap();
        let rel = entry.path().strip_prefix(from).unwrap();
        let target = to.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&target).unwrap();
        } else {
            fs::copy(entry.path(), &target).unwrap();
        }
    }
}

#[derive(Default)]
pub struct Facts(FactSet);

impl Facts {
    pub fn new() -> Self {
        Facts::default()
    }
    pub fn lang(mut self, name: &str, count: usize) -> Self {
        self.0.languages.insert(name.into(), count);
        self.0.file_count += count;
        self
    }
    pub fn manifest(mut self, m: Manifest) -> Self {
        self.0.manifests.insert(m);
        self.0.file_count += 1;
        self
    }
    pub fn target(mut self, t: &str) -> Self {
        self.0.make_targets.insert(t.into());
        self
    }
    pub fn test(mut self, t: TestEvidence) -> Self {
        self.0.tests.insert(t);
        self
    }
    pub fn iac(mut self, k: IacKind) -> Self {
        self.0.iac.insert(k);
        self
    }
    pub fn build(self) -> FactSet {
        self.0
    }
}

pub fn strings(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn langs(items: &[(&str, usize)]) -> BTreeMap<String, usize> {
    items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}
