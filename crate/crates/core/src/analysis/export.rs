//! Distance-matrix export for external embedding tools.

use crate::error::Result;
use crate::matrix::{meta_path, DistanceMatrix};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Embedding settings recommended alongside an exported matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSettings {
    pub min_dist: f64,
    pub neighborhood: usize,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings { min_dist: 0.0, neighborhood: 100 }
    }
}

/// Sidecar written next to an exported CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSidecar {
    pub ids: Vec<String>,
    pub sigma: f64,
    pub estimator: String,
    pub embedding: EmbeddingSettings,
}

/// Writes the square matrix as header-less CSV (one row per line, shortest
/// round-trip decimal so a re-import is exact) plus the settings sidecar.
pub fn export_distances<F: Real>(d: &DistanceMatrix<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for i in 0..d.n() {
        let row: Vec<String> = d.matrix().row(i).iter().map(|v| format!("{}", v.as_f64())).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;

    let sidecar = ExportSidecar {
        ids: d.ids.clone(),
        sigma: d.sigma,
        estimator: d.estimator.clone(),
        embedding: EmbeddingSettings::default(),
    };
    std::fs::write(meta_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}
