//! Staged output files. Nothing touches the destination until every output
//! of a command has been rendered, and each file is replaced atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    /// Renders with `f` into a buffer and stages the result.
    pub fn render<F>(&mut self, path: impl Into<PathBuf>, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> fuelshock_core::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.add(path, buf);
        Ok(())
    }

    /// Writes every staged file through a temporary sibling and a rename.
    /// Temporaries are created for all files before the first rename.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut pending = Vec::with_capacity(self.files.len());
        for (path, bytes) in &self.files {
            let dir = parent_dir(path);
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut tmp = tempfile::NamedTempFile::new_in(&dir)
                .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
            tmp.write_all(bytes)
                .and_then(|_| tmp.as_file().sync_all())
                .with_context(|| format!("writing {}", path.display()))?;
            pending.push((tmp, path.clone()));
        }
        let mut written = Vec::with_capacity(pending.len());
        for (tmp, path) in pending {
            tmp.persist(&path).with_context(|| format!("replacing {}", path.display()))?;
            log::info!("wrote {}", path.display());
            written.push(path);
        }
        Ok(written)
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
