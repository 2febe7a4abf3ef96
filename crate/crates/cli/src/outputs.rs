//! Output-directory bookkeeping: every pipeline records the files it wrote
//! and their content hashes into `run_manifest.json`, so identical runs are
//! checkable by hash.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot hash {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Collects files written under `out`, hashes them, and writes the manifest.
pub fn write_run_manifest(out: &Path, command: &str, seed: u64, files: &[PathBuf]) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(files.len());
    for file in files {
        let rel = file.strip_prefix(out).unwrap_or(file);
        entries.push(ManifestEntry {
            path: rel.to_string_lossy().into_owned(),
            sha256: sha256_hex(file)?,
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = RunManifest { command: command.to_string(), seed, files: entries };
    let path = out.join("run_manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Creates the output directory if needed.
pub fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))
}
