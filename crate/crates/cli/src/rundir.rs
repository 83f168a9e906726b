use std::fs;
use std::path::{Path, PathBuf};

use stanceformer::{Error, Result};

/// Artifacts land in a hidden staging directory that is renamed to the final
/// name only once the command succeeds.
pub struct RunDir {
    staging: PathBuf,
    final_path: PathBuf,
}

impl RunDir {
    /// `<out>/<command>-<utc timestamp>-<seed>`, with `-N` appended if taken.
    pub fn create(out: &Path, command: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        let base = format!("{command}-{stamp}-{seed}");
        let mut name = base.clone();
        let mut n = 1;
        while out.join(&name).exists() || out.join(format!(".{name}.partial")).exists() {
            name = format!("{base}-{n}");
            n += 1;
        }
        let staging = out.join(format!(".{name}.partial"));
        fs::create_dir(&staging).map_err(|e| Error::io(&staging, e))?;
        Ok(RunDir {
            staging,
            final_path: out.join(name),
        })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.staging.join(file)
    }

    pub fn write(&self, file: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(file);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    }

    pub fn commit(self) -> Result<PathBuf> {
        fs::rename(&self.staging, &self.final_path).map_err(|e| Error::io(&self.final_path, e))?;
        Ok(self.final_path.clone())
    }

    pub fn abandon(self) {
        let _ = fs::remove_dir_all(&self.staging);
    }
}
