use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use super::{Registry, RegistryError, SCHEMA_VERSION};

/// A registry file on disk. Writers take `<file>.lock` (created exclusively)
/// for the duration of a load-modify-save cycle and replace the file through
/// a temp file and rename.
#[derive(Debug, Clone)]
pub struct RegistryStore {
    path: PathBuf,
}

/// Held while writing; removes the lock file on drop.
#[derive(Debug)]
pub struct WriteLock {
    path: PathBuf,
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RegistryError + '_ {
    move |source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

impl RegistryStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        RegistryStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn lock_path(&self) -> PathBuf {
        sibling(&self.path, ".lock")
    }

    pub fn lock(&self) -> Result<WriteLock, RegistryError> {
        let path = self.lock_path();
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WriteLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(RegistryError::Busy(path)),
            Err(e) => Err(io(&path)(e)),
        }
    }

    /// Reads the registry; a missing file is an empty registry.
    pub fn load(&self) -> Result<Registry, RegistryError> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Registry::default()),
            Err(e) => return Err(io(&self.path)(e)),
        };
        let corrupt = |reason: String| RegistryError::Corrupt {
            path: self.path.clone(),
            reason,
        };
        let registry: Registry = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if registry.schema_version != SCHEMA_VERSION {
            return Err(corrupt(format!(
                "schema_version {} (expected {SCHEMA_VERSION})",
                registry.schema_version
            )));
        }
        if let Some((owner, target)) = registry.dangling_references().into_iter().next() {
            return Err(corrupt(format!("{owner} refers to missing {target}")));
        }
        Ok(registry)
    }

    /// Writes `registry` while holding `lock`.
    pub fn save(&self, _lock: &WriteLock, registry: &Registry) -> Result<(), RegistryError> {
        let text = to_json(registry);
        let tmp = sibling(&self.path, ".tmp");
        let mut f = File::create(&tmp).map_err(io(&tmp))?;
        f.write_all(text.as_bytes()).map_err(io(&tmp))?;
        f.sync_all().map_err(io(&tmp))?;
        drop(f);
        fs::rename(&tmp, &self.path).map_err(io(&self.path))
    }

    /// Lock, load, apply `change`, save. Nothing is written when `change`
    /// fails.
    pub fn update<T>(
        &self,
        change: impl FnOnce(&mut Registry) -> Result<T, RegistryError>,
    ) -> Result<(T, Registry), RegistryError> {
        let lock = self.lock()?;
        let mut registry = self.load()?;
        let out = change(&mut registry)?;
        self.save(&lock, &registry)?;
        Ok((out, registry))
    }
}

/// Registry file text: pretty JSON, keys sorted, LF, trailing newline.
pub fn to_json(registry: &Registry) -> String {
    // serde_json::Value maps are BTreeMaps, so keys come out sorted.
    let value = serde_json::to_value(registry).expect("registry serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}
