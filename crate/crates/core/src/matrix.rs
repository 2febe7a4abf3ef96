//! Distance and kernel matrices with identity-bearing sidecar metadata.
//!
//! Matrix file layout (little-endian): magic `SMM1`, version `u16` = 1,
//! kind `u8` (0 = distance, 1 = kernel), `N` as `u32`, then `N*N` IEEE-754
//! binary64 values row-major. A sidecar `<file>.meta.json` carries ids,
//! sigma, gamma (or null), the estimator tag and a provenance string.

use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const MATRIX_MAGIC: &[u8; 4] = b"SMM1";
const MATRIX_VERSION: u16 = 1;

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Real> SquareMatrix<F> {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, data: vec![F::zero(); n * n] }
    }

    pub fn from_vec(n: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::validation(format!(
                "square matrix of order {n} needs {} values, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[F] {
        &self.data
    }

    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.get(i, j) != self.get(j, i) {
                    return false;
                }
            }
        }
        true
    }

    /// Entrywise map preserving shape.
    pub fn map(&self, f: impl Fn(F) -> F) -> SquareMatrix<F> {
        SquareMatrix { n: self.n, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Submatrix over `idx x idx`, in the given order.
    pub fn select(&self, idx: &[usize]) -> SquareMatrix<F> {
        let mut out = SquareMatrix::zeros(idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }

    /// Rectangle `rows x cols` of entries, row-major.
    pub fn select_rect(&self, rows: &[usize], cols: &[usize]) -> Vec<F> {
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                out.push(self.get(i, j));
            }
        }
        out
    }
}

/// Which payload a matrix file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Distance,
    Kernel,
}

impl MatrixKind {
    fn code(self) -> u8 {
        match self {
            MatrixKind::Distance => 0,
            MatrixKind::Kernel => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(MatrixKind::Distance),
            1 => Ok(MatrixKind::Kernel),
            other => Err(Error::format(format!("unknown matrix kind code {other}"))),
        }
    }
}

/// Sidecar metadata stored next to every matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub kind: MatrixKind,
    pub ids: Vec<String>,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    pub estimator: Option<String>,
    pub provenance: String,
}

/// The (sigma, gamma, estimator) triple a model was trained against.
///
/// Predicting against a kernel whose fingerprint differs is refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFingerprint {
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    pub estimator: Option<String>,
}

impl KernelFingerprint {
    pub fn matches(&self, other: &KernelFingerprint) -> bool {
        self == other
    }
}

pub(crate) fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

fn write_matrix_file(path: &Path, kind: MatrixKind, n: usize, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut out = Vec::with_capacity(11 + n * n * 8);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.push(kind.code());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

fn read_matrix_file(path: &Path) -> Result<(MatrixKind, usize, Vec<f64>)> {
    let mut raw = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::format(format!("cannot open matrix file {}: {e}", path.display())))?
        .read_to_end(&mut raw)?;
    if raw.len() < 11 {
        return Err(Error::format("matrix file shorter than its fixed header"));
    }
    if &raw[0..4] != MATRIX_MAGIC {
        return Err(Error::format("bad magic: not a matrix file"));
    }
    let version = u16::from_le_bytes([raw[4], raw[5]]);
    if version != MATRIX_VERSION {
        return Err(Error::format(format!("unsupported matrix version {version}")));
    }
    let kind = MatrixKind::from_code(raw[6])?;
    let n = u32::from_le_bytes(raw[7..11].try_into().unwrap()) as usize;
    let expected = n * n * 8;
    let payload = &raw[11..];
    if payload.len() != expected {
        return Err(Error::format(format!(
            "matrix payload holds {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((kind, n, values))
}

fn read_meta(path: &Path, expect_kind: MatrixKind, n: usize) -> Result<MatrixMeta> {
    let mp = meta_path(path);
    let raw = std::fs::read_to_string(&mp)
        .map_err(|e| Error::format(format!("cannot read sidecar {}: {e}", mp.display())))?;
    let meta: MatrixMeta = serde_json::from_str(&raw)?;
    if meta.kind != expect_kind {
        return Err(Error::format(format!(
            "matrix kind mismatch between file and sidecar at {}",
            mp.display()
        )));
    }
    if meta.ids.len() != n {
        return Err(Error::format(format!(
            "sidecar lists {} ids for a matrix of order {n}",
            meta.ids.len()
        )));
    }
    Ok(meta)
}

/// N x N squared-MMD distances plus the parameters that produced them.
#[derive(Debug, Clone)]
pub struct DistanceMatrix<F: Real> {
    pub ids: Vec<String>,
    pub sigma: f64,
    /// Estimator tag; only the biased V-statistic is produced.
    pub estimator: String,
    values: SquareMatrix<F>,
}

impl<F: Real> DistanceMatrix<F> {
    /// Validates the distance invariants: symmetry (exact), zero diagonal
    /// within 1e-12, all entries finite and nonnegative.
    pub fn new(ids: Vec<String>, values: SquareMatrix<F>, sigma: f64, estimator: impl Into<String>) -> Result<Self> {
        if ids.len() != values.n() {
            return Err(Error::validation(format!(
                "{} ids for a matrix of order {}",
                ids.len(),
                values.n()
            )));
        }
        if !values.is_symmetric() {
            return Err(Error::validation("distance matrix is not exactly symmetric"));
        }
        let diag_tol = F::from_f64_lossy(1e-12);
        for i in 0..values.n() {
            if values.get(i, i).abs() > diag_tol {
                return Err(Error::validation(format!("distance diagonal entry {i} is nonzero")));
            }
        }
        if values.values().iter().any(|v| !v.is_finite() || *v < F::zero()) {
            return Err(Error::validation("distance matrix has a non-finite or negative entry"));
        }
        Ok(DistanceMatrix { ids, sigma, estimator: estimator.into(), values })
    }

    pub fn n(&self) -> usize {
        self.values.n()
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.values.get(i, j)
    }

    pub fn matrix(&self) -> &SquareMatrix<F> {
        &self.values
    }

    pub fn meta(&self, provenance: impl Into<String>) -> MatrixMeta {
        MatrixMeta {
            kind: MatrixKind::Distance,
            ids: self.ids.clone(),
            sigma: Some(self.sigma),
            gamma: None,
            estimator: Some(self.estimator.clone()),
            provenance: provenance.into(),
        }
    }

    /// Writes the binary file and its sidecar.
    pub fn write(&self, path: impl AsRef<Path>, provenance: &str) -> Result<()> {
        let path = path.as_ref();
        write_matrix_file(path, MatrixKind::Distance, self.n(), self.values.values().iter().map(|v| v.as_f64()))?;
        let meta = self.meta(provenance);
        std::fs::write(meta_path(path), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (kind, n, raw) = read_matrix_file(path)?;
        if kind != MatrixKind::Distance {
            return Err(Error::format(format!("{} holds a kernel, not distances", path.display())));
        }
        let meta = read_meta(path, MatrixKind::Distance, n)?;
        let values = SquareMatrix::from_vec(n, raw.into_iter().map(F::from_f64_lossy).collect())?;
        DistanceMatrix::new(
            meta.ids,
            values,
            meta.sigma.ok_or_else(|| Error::format("distance sidecar lacks sigma"))?,
            meta.estimator.unwrap_or_else(|| "biased".to_string()),
        )
    }

    /// Distance submatrix over the given indices, keeping metadata.
    pub fn select(&self, idx: &[usize]) -> DistanceMatrix<F> {
        DistanceMatrix {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            sigma: self.sigma,
            estimator: self.estimator.clone(),
            values: self.values.select(idx),
        }
    }
}

/// N x N similarity kernel in `[0, 1]` with unit diagonal.
#[derive(Debug, Clone)]
pub struct KernelMatrix<F: Real> {
    pub ids: Vec<String>,
    /// Decay rate of the distance-to-kernel transform; `None` for kernels
    /// that were not produced by that transform (e.g. fused ones).
    pub gamma: Option<f64>,
    /// Bandwidth of the kernel that generated the source distances, when known.
    pub sigma: Option<f64>,
    pub estimator: Option<String>,
    /// Source description: distance file, topic recipe or fusion recipe.
    pub provenance: String,
    values: SquareMatrix<F>,
}

impl<F: Real> KernelMatrix<F> {
    /// Validates the kernel invariants: symmetry, entries in `[0, 1]`
    /// (within 1e-12 slack), unit diagonal within 1e-12.
    pub fn new(
        ids: Vec<String>,
        values: SquareMatrix<F>,
        gamma: Option<f64>,
        sigma: Option<f64>,
        estimator: Option<String>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if ids.len() != values.n() {
            return Err(Error::validation(format!(
                "{} ids for a matrix of order {}",
                ids.len(),
                values.n()
            )));
        }
        if !values.is_symmetric() {
            return Err(Error::validation("kernel matrix is not exactly symmetric"));
        }
        let tol = F::from_f64_lossy(1e-12);
        let one = F::one();
        for i in 0..values.n() {
            if (values.get(i, i) - one).abs() > tol {
                return Err(Error::validation(format!("kernel diagonal entry {i} is not 1")));
            }
        }
        if values.values().iter().any(|v| !v.is_finite() || *v < -tol || *v > one + tol) {
            return Err(Error::validation("kernel entry outside [0, 1]"));
        }
        Ok(KernelMatrix { ids, gamma, sigma, estimator, provenance: provenance.into(), values })
    }

    /// Constructor for combined kernels that intentionally leave the
    /// `[0, 1]`/unit-diagonal range (e.g. unscaled sums). Symmetry is still
    /// the caller's responsibility.
    pub(crate) fn new_unchecked(
        ids: Vec<String>,
        values: SquareMatrix<F>,
        gamma: Option<f64>,
        sigma: Option<f64>,
        estimator: Option<String>,
        provenance: impl Into<String>,
    ) -> Self {
        KernelMatrix { ids, gamma, sigma, estimator, provenance: provenance.into(), values }
    }

    pub fn n(&self) -> usize {
        self.values.n()
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.values.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[F] {
        self.values.row(i)
    }

    pub fn matrix(&self) -> &SquareMatrix<F> {
        &self.values
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn fingerprint(&self) -> KernelFingerprint {
        KernelFingerprint { sigma: self.sigma, gamma: self.gamma, estimator: self.estimator.clone() }
    }

    pub fn meta(&self) -> MatrixMeta {
        MatrixMeta {
            kind: MatrixKind::Kernel,
            ids: self.ids.clone(),
            sigma: self.sigma,
            gamma: self.gamma,
            estimator: self.estimator.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_matrix_file(path, MatrixKind::Kernel, self.n(), self.values.values().iter().map(|v| v.as_f64()))?;
        std::fs::write(meta_path(path), serde_json::to_string_pretty(&self.meta())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (kind, n, raw) = read_matrix_file(path)?;
        if kind != MatrixKind::Kernel {
            return Err(Error::format(format!("{} holds distances, not a kernel", path.display())));
        }
        let meta = read_meta(path, MatrixKind::Kernel, n)?;
        let values = SquareMatrix::from_vec(n, raw.into_iter().map(F::from_f64_lossy).collect())?;
        KernelMatrix::new(meta.ids, values, meta.gamma, meta.sigma, meta.estimator, meta.provenance)
    }

    /// Kernel submatrix over the given indices, keeping metadata.
    pub fn select(&self, idx: &[usize]) -> KernelMatrix<F> {
        KernelMatrix {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            gamma: self.gamma,
            sigma: self.sigma,
            estimator: self.estimator.clone(),
            provenance: self.provenance.clone(),
            values: self.values.select(idx),
        }
    }
}
