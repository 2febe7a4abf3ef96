//! Kernel machines over precomputed kernels.
//!
//! Three model families share one dual representation: epsilon-insensitive
//! regression ([`fit_svr`]), soft-margin binary classification ([`fit_svc`])
//! and a ranking-based survival model ([`survival::fit_survival`]). All of
//! them score a query as `f(q) = sum_i coef_i * K(train_i, q) (+ bias)`.

mod smo;
pub mod cv;
pub mod survival;

pub use cv::{
    cross_validate, train_model, tune, tune_on_carve, CvConfig, FoldOutcome, FoldResults, GammaRule,
    GridPoint, TaskLabels,
};
pub use smo::{fit_svc, fit_svr};
pub use survival::{fit_survival, SurvivalRecord};

use crate::error::{Error, Result};
use crate::matrix::KernelFingerprint;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Which objective a model was trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Svr,
    Svc,
    Survival,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskKind::Svr => write!(f, "svr"),
            TaskKind::Svc => write!(f, "svc"),
            TaskKind::Survival => write!(f, "survival"),
        }
    }
}

/// A trained kernel machine in dual form.
///
/// `coefficients[i]` weights `K(train_ids[i], query)`; survival models carry
/// no bias (their objective is ranking-invariant to one).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualModel<F: Real> {
    pub task: TaskKind,
    pub train_ids: Vec<String>,
    pub coefficients: Vec<F>,
    pub bias: Option<F>,
    /// Hyperparameters the model was trained with (C, epsilon, alpha, ...).
    pub hyperparams: BTreeMap<String, f64>,
    /// Fingerprint of the kernel the model was trained against.
    pub kernel: KernelFingerprint,
}

impl<F: Real> DualModel<F> {
    /// Scores queries against a train-by-query kernel rectangle, row-major
    /// with one row per training item.
    pub fn predict(&self, k_cross: &[F], queries: usize) -> Result<Vec<F>> {
        predict_rect(&self.coefficients, self.bias, k_cross, queries)
    }

    /// Refuses to score against a kernel whose fingerprint differs from the
    /// one the model was trained on.
    pub fn check_kernel(&self, fingerprint: &KernelFingerprint) -> Result<()> {
        if self.kernel.matches(fingerprint) {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "kernel fingerprint mismatch: model trained against {:?}, got {:?}",
                self.kernel, fingerprint
            )))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()>
    where
        F: Serialize,
    {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self>
    where
        F: for<'de> Deserialize<'de>,
    {
        let raw = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&raw)?)
    }
}

/// Shared scoring path: `f(q) = sum_i coef_i * K[i][q] (+ bias)`.
pub fn predict_rect<F: Real>(coefficients: &[F], bias: Option<F>, k_cross: &[F], queries: usize) -> Result<Vec<F>> {
    let rows = coefficients.len();
    if rows * queries != k_cross.len() {
        return Err(Error::validation(format!(
            "cross-kernel of {} entries does not match {rows} train rows x {queries} queries",
            k_cross.len()
        )));
    }
    let mut scores = vec![bias.unwrap_or_else(F::zero); queries];
    for (i, &c) in coefficients.iter().enumerate() {
        let row = &k_cross[i * queries..(i + 1) * queries];
        for (s, &k) in scores.iter_mut().zip(row) {
            *s = *s + c * k;
        }
    }
    Ok(scores)
}
