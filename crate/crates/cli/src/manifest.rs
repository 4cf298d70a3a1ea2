//! Run manifests and their verification.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::run::Check;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileEntry {
    pub fn of_bytes(path: &str, data: &[u8]) -> Self {
        Self {
            path: path.into(),
            sha256: hex::encode(Sha256::digest(data)),
            bytes: data.len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub config_hash: String,
    pub software_version: String,
    pub started: String,
    pub finished: String,
    pub files: Vec<FileEntry>,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Verification {
    pub checked: usize,
    pub missing: Vec<PathBuf>,
    pub modified: Vec<PathBuf>,
}

impl Verification {
    pub fn ok(&self) -> bool {
        self.missing.is_empty() && self.modified.is_empty()
    }
}

/// Re-hash every file listed in the manifest at `path`.
pub fn verify(path: &Path) -> Result<Verification> {
    let manifest = RunManifest::read(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut v = Verification::default();
    for f in &manifest.files {
        let p = dir.join(&f.path);
        v.checked += 1;
        match std::fs::read(&p) {
            Ok(data) => {
                if FileEntry::of_bytes(&f.path, &data) != *f {
                    v.modified.push(p);
                }
            }
            Err(_) => v.missing.push(p),
        }
    }
    Ok(v)
}
