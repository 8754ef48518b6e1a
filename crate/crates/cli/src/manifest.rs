use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::fail::{CliResult, Failure};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: String,
    /// Relative to the output directory.
    pub path: PathBuf,
}

/// Index of everything one invocation wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub jobs: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Resolved settings of the command as a TOML document.
    pub config: String,
    pub artifacts: Vec<Artifact>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Collects artifacts; every file goes through [`Writer::write`] so the
/// manifest lists exactly what exists on disk.
pub struct Writer {
    out_dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Writer {
    pub fn new(out_dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(out_dir).map_err(|e| {
            Failure::data(format!("cannot create {}: {e}", out_dir.display()))
        })?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out_dir.join(rel)
    }

    pub fn write(&mut self, kind: &str, rel: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.path(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| Failure::data(format!("cannot create {}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes)
            .map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))?;
        self.record(kind, rel);
        Ok(path)
    }

    /// Registers a file written by other means.
    pub fn record(&mut self, kind: &str, rel: impl AsRef<Path>) {
        self.artifacts.push(Artifact {
            kind: kind.into(),
            path: rel.as_ref().to_path_buf(),
        });
    }

    pub fn finish(mut self, mut manifest: RunManifest) -> CliResult<PathBuf> {
        manifest.artifacts = std::mem::take(&mut self.artifacts);
        manifest.finished_unix = unix_now();
        let text = toml::to_string(&manifest)
            .map_err(|e| Failure::data(format!("manifest: {e}")))?;
        let path = self.path(MANIFEST_FILE);
        fs::write(&path, text)
            .map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
