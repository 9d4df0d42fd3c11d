//! Output directory bookkeeping: data files, a metadata record and a
//! checksum manifest.
//!
//! Data files depend only on the effective configuration. The wall-clock
//! timestamp and output path live in `metadata.json` alone.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliResult;

pub const METADATA: &str = "metadata.json";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

pub struct RunDir {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl RunDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| format!("writing {}: {e}", path.display()))?;
        self.entries.push(ManifestEntry {
            file: name.to_string(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(name, &text)
    }

    /// Writes `metadata.json` and then the manifest covering every file.
    pub fn finish(mut self, command: &str, config: &Value) -> CliResult<Vec<ManifestEntry>> {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let meta = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "unix_time": stamp,
            "out": self.dir.display().to_string(),
            "config": config,
        });
        self.write_json(METADATA, &meta)?;
        let entries = self.entries.clone();
        self.write_json(MANIFEST, &entries)?;
        Ok(entries)
    }
}

/// Hex SHA-256 of a file, for manifest verification.
pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
