//! Repository scanning.
//!
//! A scan walks the working tree, ignores vendored and VCS directories, and
//! reduces what it sees to a [`FactSet`]: language file counts, dependency
//! manifests at the root, makefile targets, test evidence and IaC kinds.
//! Only file names and the root makefile's text are consulted, and every
//! collection is ordered, so the result does not depend on the order in
//! which the filesystem enumerates entries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::integrity::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("path not found: {0}")]
    PathNotFound(PathBuf),
    #[error("not a directory: {0}")]
    NotADirectory(PathBuf),
    #[error("repository has more than {limit} files")]
    TooManyFiles { limit: usize },
    #[error("invalid ignore pattern `{pattern}`: {source}")]
    BadIgnorePattern {
        pattern: String,
        #[source]
        source: globset::Error,
    },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Dependency manifests that trigger composition analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Manifest {
    GoMod,
    RequirementsTxt,
    PomXml,
}

impl Manifest {
    pub const ALL: [Manifest; 3] = [Manifest::GoMod, Manifest::RequirementsTxt, Manifest::PomXml];

    pub fn file_name(self) -> &'static str {
        match self {
            Manifest::GoMod => "go.mod",
            Manifest::RequirementsTxt => "requirements.txt",
            Manifest::PomXml => "pom.xml",
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Manifest::GoMod => "go-mod",
            Manifest::RequirementsTxt => "requirements-txt",
            Manifest::PomXml => "pom-xml",
        }
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IacKind {
    Terraform,
}

impl IacKind {
    /// Language name the default extension map assigns to this kind's files.
    pub fn language(self) -> &'static str {
        match self {
            IacKind::Terraform => "Terraform",
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            IacKind::Terraform => "terraform",
        }
    }
}

/// Evidence that a repository has tests to run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TestEvidence {
    /// Language-native test files, keyed by lowercase language name.
    Native(String),
    /// A `test` target in the root makefile; applies to any language.
    MakeTest,
}

impl TestEvidence {
    pub fn native(language: &str) -> Self {
        TestEvidence::Native(language.to_ascii_lowercase())
    }

    /// Whether this evidence justifies test jobs for `language`.
    pub fn covers(&self, language: &str) -> bool {
        match self {
            TestEvidence::MakeTest => true,
            TestEvidence::Native(lang) => lang.eq_ignore_ascii_case(language),
        }
    }
}

impl fmt::Display for TestEvidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestEvidence::Native(lang) => write!(f, "{lang}-native"),
            TestEvidence::MakeTest => f.write_str("make-test"),
        }
    }
}

impl From<TestEvidence> for String {
    fn from(value: TestEvidence) -> Self {
        value.to_string()
    }
}

impl FromStr for TestEvidence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "make-test" {
            return Ok(TestEvidence::MakeTest);
        }
        match s.strip_suffix("-native") {
            Some(lang) if !lang.is_empty() => Ok(TestEvidence::native(lang)),
            _ => Err(format!("unknown test evidence `{s}`")),
        }
    }
}

impl TryFrom<String> for TestEvidence {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

/// Evidence extracted from a repository.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSet {
    pub languages: BTreeMap<String, usize>,
    pub manifests: BTreeSet<Manifest>,
    pub make_targets: BTreeSet<String>,
    pub tests: BTreeSet<TestEvidence>,
    pub iac: BTreeSet<IacKind>,
    pub file_count: usize,
}

impl FactSet {
    pub fn is_empty(&self) -> bool {
        self.languages.is_empty()
            && self.manifests.is_empty()
            && self.make_targets.is_empty()
            && self.tests.is_empty()
            && self.iac.is_empty()
    }

    /// Canonical text form: YAML with sorted keys.
    pub fn to_yaml(&self) -> String {
        crate::yaml::to_canonical_yaml(self).expect("fact sets always serialize")
    }

    /// SHA-256 over the canonical YAML form.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_yaml().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Patterns ending in `/` name directories at any depth; anything else
    /// is a glob matched against the slash-separated relative path.
    pub ignore_globs: Vec<String>,
    /// Lowercase extension without the dot → language name.
    pub extension_map: BTreeMap<String, String>,
    pub max_files: Option<usize>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let extension_map = [
            ("go", "Go"),
            ("py", "Python"),
            ("java", "Java"),
            ("kt", "Kotlin"),
            ("rs", "Rust"),
            ("ts", "TypeScript"),
            ("tsx", "TypeScript"),
            ("js", "JavaScript"),
            ("rb", "Ruby"),
            ("tf", "Terraform"),
        ]
        .into_iter()
        .map(|(ext, lang)| (ext.to_string(), lang.to_string()))
        .collect();
        ScanConfig {
            ignore_globs: [".git/", "vendor/", "node_modules/", "target/"]
                .into_iter()
                .map(String::from)
                .collect(),
            extension_map,
            max_files: None,
        }
    }
}

struct IgnoreSet {
    dirs: GlobSet,
    paths: GlobSet,
}

impl IgnoreSet {
    fn compile(patterns: &[String]) -> Result<Self, ScanError> {
        let mut dirs = GlobSetBuilder::new();
        let mut paths = GlobSetBuilder::new();
        let glob = |pattern: &str| {
            Glob::new(pattern).map_err(|source| ScanError::BadIgnorePattern {
                pattern: pattern.to_string(),
                source,
            })
        };
        for pattern in patterns {
            match pattern.strip_suffix('/') {
                Some(dir) => {
                    dirs.add(glob(dir)?);
                    dirs.add(glob(&format!("**/{dir}"))?);
                }
                None => {
                    paths.add(glob(pattern)?);
                }
            }
        }
        let build = |builder: GlobSetBuilder| {
            builder.build().map_err(|source| ScanError::BadIgnorePattern {
                pattern: patterns.join(", "),
                source,
            })
        };
        Ok(IgnoreSet {
            dirs: build(dirs)?,
            paths: build(paths)?,
        })
    }

    fn ignores_dir(&self, rel: &str) -> bool {
        self.dirs.is_match(rel) || self.paths.is_match(rel)
    }

    fn ignores_file(&self, rel: &str) -> bool {
        self.paths.is_match(rel)
    }
}

const MAKEFILE_NAMES: [&str; 3] = ["GNUmakefile", "makefile", "Makefile"];

/// Walks `path` and extracts its [`FactSet`]. Symbolic links are skipped.
pub fn scan_repository(path: &Path, config: &ScanConfig) -> Result<FactSet, ScanError> {
    let meta = fs::metadata(path).map_err(|err| match err.kind() {
        std::io::ErrorKind::NotFound => ScanError::PathNotFound(path.to_path_buf()),
        _ => ScanError::Io {
            path: path.to_path_buf(),
            source: err,
        },
    })?;
    if !meta.is_dir() {
        return Err(ScanError::NotADirectory(path.to_path_buf()));
    }

    let files = list_files(path, config)?;
    let makefile_text = match MAKEFILE_NAMES
        .iter()
        .find(|name| files.iter().any(|f| f == *name))
    {
        Some(name) => {
            let full = path.join(name);
            let bytes = fs::read(&full).map_err(|source| ScanError::Io { path: full, source })?;
            String::from_utf8_lossy(&bytes).into_owned()
        }
        None => String::new(),
    };
    Ok(facts_from_listing(&files, &makefile_text, config))
}

/// Relative, slash-separated paths of every regular file not ignored by
/// `config`, in sorted order.
pub fn list_files(root: &Path, config: &ScanConfig) -> Result<Vec<String>, ScanError> {
    let ignore = IgnoreSet::compile(&config.ignore_globs)?;
    let mut files = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|entry| {
            if entry.depth() == 0 || !entry.file_type().is_dir() {
                return true;
            }
            !ignore.ignores_dir(&relative(root, entry.path()))
        });
    for entry in walker {
        let entry = entry.map_err(|err| {
            let path = err.path().unwrap_or(root).to_path_buf();
            ScanError::Io {
                path,
                source: err.into(),
            }
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = relative(root, entry.path());
        if ignore.ignores_file(&rel) {
            continue;
        }
        files.push(rel);
        if let Some(limit) = config.max_files {
            if files.len() > limit {
                return Err(ScanError::TooManyFiles { limit });
            }
        }
    }
    files.sort();
    Ok(files)
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Builds a [`FactSet`] from an already filtered file listing.
pub fn facts_from_listing(files: &[String], makefile_text: &str, config: &ScanConfig) -> FactSet {
    let languages = detect_languages(files, config);
    let make_targets = detect_make_targets(makefile_text);
    let tests = detect_tests(files, &languages, &make_targets);
    FactSet {
        manifests: detect_manifests(files),
        iac: detect_iac(files),
        file_count: files.len(),
        languages,
        make_targets,
        tests,
    }
}

fn file_name(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

fn extension(path: &str) -> Option<String> {
    let name = file_name(path);
    let (stem, ext) = name.rsplit_once('.')?;
    if stem.is_empty() || ext.is_empty() {
        return None;
    }
    Some(ext.to_ascii_lowercase())
}

pub fn detect_languages<S: AsRef<str>>(
    file_paths: &[S],
    config: &ScanConfig,
) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for path in file_paths {
        let Some(ext) = extension(path.as_ref()) else {
            continue;
        };
        if let Some(lang) = config.extension_map.get(&ext) {
            *counts.entry(lang.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Top-level rule targets of a makefile. Special targets (leading `.`),
/// pattern rules and variable assignments are skipped.
pub fn detect_make_targets(makefile_text: &str) -> BTreeSet<String> {
    let mut targets = BTreeSet::new();
    for line in makefile_text.lines() {
        let Some(first) = line.chars().next() else {
            continue;
        };
        if first.is_whitespace() || first == '#' {
            continue;
        }
        let Some((head, rest)) = line.split_once(':') else {
            continue;
        };
        // `VAR := x`, `VAR ::= x`, `VAR = a:b`
        if rest.starts_with('=') || rest.starts_with(":=") || head.contains('=') {
            continue;
        }
        for name in head.split_whitespace() {
            if name.starts_with('.') || name.contains('%') || name.contains('$') {
                continue;
            }
            targets.insert(name.to_string());
        }
    }
    targets
}

pub fn detect_tests<S: AsRef<str>>(
    file_paths: &[S],
    languages: &BTreeMap<String, usize>,
    make_targets: &BTreeSet<String>,
) -> BTreeSet<TestEvidence> {
    let mut tests = BTreeSet::new();
    if languages.contains_key("Go") && file_paths.iter().any(|p| p.as_ref().ends_with("_test.go")) {
        tests.insert(TestEvidence::native("Go"));
    }
    if make_targets.contains("test") {
        tests.insert(TestEvidence::MakeTest);
    }
    tests
}

/// Manifests present at the repository root.
pub fn detect_manifests<S: AsRef<str>>(file_paths: &[S]) -> BTreeSet<Manifest> {
    Manifest::ALL
        .into_iter()
        .filter(|m| file_paths.iter().any(|p| p.as_ref() == m.file_name()))
        .collect()
}

pub fn detect_iac<S: AsRef<str>>(file_paths: &[S]) -> BTreeSet<IacKind> {
    let mut iac = BTreeSet::new();
    if file_paths
        .iter()
        .any(|p| extension(p.as_ref()).as_deref() == Some("tf"))
    {
        iac.insert(IacKind::Terraform);
    }
    iac
}
