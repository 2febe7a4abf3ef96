//! Embedding bags, dataset manifests and their on-disk formats.
//!
//! A bag is one sample: an unordered multiset of `d`-dimensional embedding
//! vectors. Bag payloads are stored as 32-bit floats (embedding scale) and
//! held in memory at the crate's scalar precision so that the million-term
//! sums downstream have headroom.
//!
//! Binary bag layout (little-endian): magic `SMB1`, version `u16` = 1,
//! `d` as `u32`, `n` as `u64`, then `n*d` IEEE-754 binary32 values
//! row-major. The manifest is UTF-8 CSV with a header; required columns
//! `id`, `path`, `patient`; any additional column is a label column.

use crate::error::{Error, Result};
use crate::scalar::Real;
use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const BAG_MAGIC: &[u8; 4] = b"SMB1";
const BAG_VERSION: u16 = 1;

/// One sample: `n` embedding vectors of dimension `d`, row-major.
///
/// Row order carries no meaning; two bags with permuted rows are the same
/// sample. Multiplicity is kept: duplicate rows are not merged.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBag<F: Real> {
    pub id: String,
    pub patient_id: String,
    dim: usize,
    data: Vec<F>,
}

impl<F: Real> EmbeddingBag<F> {
    /// Builds a bag from row-major data, validating shape and finiteness.
    pub fn new(id: impl Into<String>, patient_id: impl Into<String>, dim: usize, data: Vec<F>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be >= 1"));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(Error::validation(format!(
                "bag payload of {} values is not a nonempty multiple of d={dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("bag contains a non-finite value"));
        }
        Ok(EmbeddingBag { id: id.into(), patient_id: patient_id.into(), dim, data })
    }

    /// Number of vectors in the bag.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Embedding dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row `i` as a slice of length `dim`.
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// All rows, row-major.
    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.data.chunks_exact(self.dim)
    }

    /// Flat row-major payload.
    pub fn values(&self) -> &[F] {
        &self.data
    }

    /// Copy of the bag with row `index` removed. Errors on singleton bags.
    pub fn without_row(&self, index: usize) -> Result<Self> {
        if self.len() < 2 {
            return Err(Error::validation("cannot remove a row from a singleton bag"));
        }
        if index >= self.len() {
            return Err(Error::validation(format!(
                "row index {index} out of bounds for bag of {}",
                self.len()
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() - self.dim);
        data.extend_from_slice(&self.data[..index * self.dim]);
        data.extend_from_slice(&self.data[(index + 1) * self.dim..]);
        Ok(EmbeddingBag { id: self.id.clone(), patient_id: self.patient_id.clone(), dim: self.dim, data })
    }

    /// Reads a bag file. Identity defaults to the file stem; dataset loads
    /// overwrite it with the manifest row's `id` and `patient`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "bag".to_string());
        let mut file = std::fs::File::open(path)
            .map_err(|e| Error::format(format!("cannot open bag file {}: {e}", path.display())))?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;
        Self::from_bytes(&stem, &raw)
    }

    /// Decodes the binary bag layout from memory.
    pub fn from_bytes(id: &str, raw: &[u8]) -> Result<Self> {
        if raw.len() < 18 {
            return Err(Error::format("bag file shorter than its fixed header"));
        }
        if &raw[0..4] != BAG_MAGIC {
            return Err(Error::format("bad magic: not a bag file"));
        }
        let version = u16::from_le_bytes([raw[4], raw[5]]);
        if version != BAG_VERSION {
            return Err(Error::format(format!("unsupported bag version {version}")));
        }
        let dim = u32::from_le_bytes(raw[6..10].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(raw[10..18].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(Error::validation("bag header declares d=0"));
        }
        if n == 0 {
            return Err(Error::validation("bag header declares n=0; empty bags are rejected"));
        }
        let expected = n
            .checked_mul(dim)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| Error::format("bag header declares an implausible payload size"))?;
        let payload = &raw[18..];
        if payload.len() < expected {
            return Err(Error::format(format!(
                "bag payload truncated: expected {expected} bytes, found {}",
                payload.len()
            )));
        }
        if payload.len() > expected {
            return Err(Error::format(format!(
                "bag payload has {} trailing bytes",
                payload.len() - expected
            )));
        }
        let mut data = Vec::with_capacity(n * dim);
        for chunk in payload.chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::validation("bag contains a non-finite value"));
            }
            data.push(F::from_f32(v).expect("f32 widens to Real"));
        }
        EmbeddingBag::new(id, "", dim, data)
    }

    /// Writes the bag in the binary layout. Values are narrowed to binary32;
    /// a bag that came from disk round-trips byte-identically.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = Vec::with_capacity(18 + self.data.len() * 4);
        out.extend_from_slice(BAG_MAGIC);
        out.extend_from_slice(&BAG_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in &self.data {
            let f = v.to_f32().expect("Real narrows to f32");
            out.extend_from_slice(&f.to_le_bytes());
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }
}

/// One manifest row: identity plus sparse label columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub path: PathBuf,
    pub patient_id: String,
    /// Label column name -> value. Empty cells are absent keys.
    pub labels: BTreeMap<String, String>,
}

/// Parsed dataset manifest: rows in file order plus the label column names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    pub label_columns: Vec<String>,
}

impl DatasetManifest {
    /// Parses the manifest CSV. Relative bag paths resolve against the
    /// manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::format(format!("manifest is missing required column '{name}'")))
        };
        let id_col = col("id")?;
        let path_col = col("path")?;
        let patient_col = col("patient")?;
        let label_columns: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != id_col && *i != path_col && *i != patient_col)
            .map(|(i, h)| (i, h.to_string()))
            .collect();

        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for record in reader.records() {
            let record = record?;
            let id = record.get(id_col).unwrap_or("").to_string();
            if id.is_empty() {
                return Err(Error::validation("manifest row with empty id"));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::validation(format!("duplicate id '{id}' in manifest")));
            }
            let raw_path = PathBuf::from(record.get(path_col).unwrap_or(""));
            let path = if raw_path.is_absolute() { raw_path } else { base.join(raw_path) };
            let patient_id = record.get(patient_col).unwrap_or("").to_string();
            let mut labels = BTreeMap::new();
            for (i, name) in &label_columns {
                let value = record.get(*i).unwrap_or("");
                if !value.is_empty() {
                    labels.insert(name.clone(), value.to_string());
                }
            }
            rows.push(ManifestRow { id, path, patient_id, labels });
        }
        Ok(DatasetManifest {
            rows,
            label_columns: label_columns.into_iter().map(|(_, n)| n).collect(),
        })
    }

    /// Label value of `id` in `column`, if the cell is present.
    pub fn label(&self, id: &str, column: &str) -> Option<&str> {
        self.rows
            .iter()
            .find(|r| r.id == id)
            .and_then(|r| r.labels.get(column))
            .map(String::as_str)
    }
}

/// Bags plus the manifest they were loaded from, in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset<F: Real> {
    pub bags: Vec<EmbeddingBag<F>>,
    pub manifest: DatasetManifest,
}

impl<F: Real> Dataset<F> {
    /// Loads every bag named by the manifest, in manifest order, and checks
    /// that all bags share one embedding dimension.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let mut bags = Vec::with_capacity(manifest.rows.len());
        let mut dim: Option<usize> = None;
        for row in &manifest.rows {
            let mut bag = EmbeddingBag::load(&row.path)?;
            bag.id = row.id.clone();
            bag.patient_id = row.patient_id.clone();
            match dim {
                None => dim = Some(bag.dim()),
                Some(d) if d != bag.dim() => {
                    return Err(Error::DimensionMismatch { expected: d, got: bag.dim() })
                }
                _ => {}
            }
            bags.push(bag);
        }
        Ok(Dataset { bags, manifest })
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    /// Bag ids in dataset order.
    pub fn ids(&self) -> Vec<String> {
        self.bags.iter().map(|b| b.id.clone()).collect()
    }

    /// View of the whole dataset.
    pub fn view(&self) -> DatasetView<'_, F> {
        DatasetView { dataset: self, indices: (0..self.bags.len()).collect() }
    }

    /// View omitting every bag whose patient matches. Unknown patients yield
    /// the identity view; the dataset itself is untouched.
    pub fn exclude_patient(&self, patient_id: &str) -> DatasetView<'_, F> {
        self.view().exclude_patient(patient_id)
    }
}

/// A borrowed, filtered view over a dataset. Cheap to clone and refine.
#[derive(Debug, Clone)]
pub struct DatasetView<'a, F: Real> {
    dataset: &'a Dataset<F>,
    indices: Vec<usize>,
}

impl<'a, F: Real> DatasetView<'a, F> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Indices into the underlying dataset, in dataset order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn bags(&self) -> impl Iterator<Item = &'a EmbeddingBag<F>> + '_ {
        self.indices.iter().map(move |&i| &self.dataset.bags[i])
    }

    /// Further view without the given patient's bags. Idempotent.
    pub fn exclude_patient(&self, patient_id: &str) -> DatasetView<'a, F> {
        let indices = self
            .indices
            .iter()
            .copied()
            .filter(|&i| self.dataset.bags[i].patient_id != patient_id)
            .collect();
        DatasetView { dataset: self.dataset, indices }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_bag_bytes(dim: u32, rows: &[&[f32]]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"SMB1");
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&dim.to_le_bytes());
        out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
        for row in rows {
            for v in *row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn loads_single_zero_vector() {
        let raw = raw_bag_bytes(2, &[&[0.0, 0.0]]);
        let bag: EmbeddingBag<f64> = EmbeddingBag::from_bytes("z", &raw).unwrap();
        assert_eq!(bag.len(), 1);
        assert_eq!(bag.dim(), 2);
        assert_eq!(bag.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn payload_matches_independent_decode() {
        // Oracle: decode the same bytes with a separate minimal reader and
        // compare row sums.
        let rows: Vec<Vec<f32>> = vec![
            vec![1.5, -2.25, 3.0],
            vec![0.125, 8.0, -1.0],
            vec![7.5, 0.5, 0.25],
            vec![-4.0, 2.0, 9.0],
        ];
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let raw = raw_bag_bytes(3, &refs);

        // Minimal independent reader: skip 18 header bytes, chunk by 4.
        let floats: Vec<f32> = raw[18..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let oracle_row_sums: Vec<f64> = floats.chunks(3).map(|r| r.iter().map(|&v| v as f64).sum()).collect();

        let bag: EmbeddingBag<f64> = EmbeddingBag::from_bytes("b", &raw).unwrap();
        let row_sums: Vec<f64> = bag.rows().map(|r| r.iter().sum()).collect();
        assert_eq!(row_sums, oracle_row_sums);
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let mut raw = raw_bag_bytes(2, &[&[1.0, 2.0], &[3.0, 4.0]]);
        raw.truncate(raw.len() - 3);
        let err = EmbeddingBag::<f64>::from_bytes("t", &raw).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn bad_magic_and_empty_bag_are_rejected() {
        let mut raw = raw_bag_bytes(2, &[&[1.0, 2.0]]);
        raw[0] = b'X';
        assert!(matches!(EmbeddingBag::<f64>::from_bytes("m", &raw).unwrap_err(), Error::Format(_)));

        let raw = raw_bag_bytes(2, &[]);
        assert!(matches!(EmbeddingBag::<f64>::from_bytes("e", &raw).unwrap_err(), Error::Validation(_)));
    }

    #[test]
    fn non_finite_value_is_validation_error() {
        let mut raw = raw_bag_bytes(1, &[&[1.0]]);
        let nan = f32::NAN.to_le_bytes();
        let at = raw.len() - 4;
        raw[at..].copy_from_slice(&nan);
        assert!(matches!(EmbeddingBag::<f64>::from_bytes("n", &raw).unwrap_err(), Error::Validation(_)));
    }

    fn write_manifest(dir: &Path, rows: &str) -> PathBuf {
        let path = dir.join("manifest.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "id,path,patient,grade").unwrap();
        write!(f, "{rows}").unwrap();
        path
    }

    fn write_bag_file(dir: &Path, name: &str, dim: usize, rows: usize, fill: f32) {
        let data = vec![fill; dim * rows];
        let bag = EmbeddingBag::<f64>::new(name, "", dim, data.iter().map(|&v| v as f64).collect()).unwrap();
        bag.write(dir.join(name)).unwrap();
    }

    #[test]
    fn dataset_load_preserves_order_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        for (name, fill) in [("a.bag", 0.5), ("b.bag", 1.0), ("c.bag", 2.0)] {
            write_bag_file(dir.path(), name, 8, 3, fill);
        }
        let manifest = write_manifest(
            dir.path(),
            "s1,a.bag,P1,high\ns2,b.bag,P1,\ns3,c.bag,P2,low\n",
        );
        let ds: Dataset<f64> = Dataset::load(&manifest).unwrap();
        assert_eq!(ds.ids(), vec!["s1", "s2", "s3"]);
        assert_eq!(ds.manifest.label_columns, vec!["grade"]);
        assert_eq!(ds.manifest.label("s1", "grade"), Some("high"));
        assert_eq!(ds.manifest.label("s2", "grade"), None, "empty cell is a missing label");

        // Determinism: a second load yields identical ids in identical order.
        let again: Dataset<f64> = Dataset::load(&manifest).unwrap();
        assert_eq!(again.ids(), ds.ids());
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_bag_file(dir.path(), "a.bag", 4, 2, 1.0);
        let manifest = write_manifest(dir.path(), "s1,a.bag,P1,\ns1,a.bag,P2,\n");
        assert!(matches!(Dataset::<f64>::load(&manifest).unwrap_err(), Error::Validation(_)));
    }

    #[test]
    fn mixed_dimension_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_bag_file(dir.path(), "a.bag", 8, 2, 1.0);
        write_bag_file(dir.path(), "b.bag", 16, 2, 1.0);
        let manifest = write_manifest(dir.path(), "s1,a.bag,P1,\ns2,b.bag,P2,\n");
        assert!(matches!(
            Dataset::<f64>::load(&manifest).unwrap_err(),
            Error::DimensionMismatch { expected: 8, got: 16 }
        ));
    }

    #[test]
    fn exclude_patient_filters_and_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.bag", "b.bag", "c.bag", "d.bag", "e.bag"] {
            write_bag_file(dir.path(), name, 4, 2, 1.0);
        }
        let manifest = write_manifest(
            dir.path(),
            "s1,a.bag,P1,\ns2,b.bag,P1,\ns3,c.bag,P2,\ns4,d.bag,P3,\ns5,e.bag,P3,\n",
        );
        let ds: Dataset<f64> = Dataset::load(&manifest).unwrap();
        let v = ds.exclude_patient("P1");
        assert_eq!(v.len(), 3);
        let vv = v.exclude_patient("P1");
        assert_eq!(vv.indices(), v.indices());
        assert_eq!(ds.exclude_patient("nobody").len(), 5);

        // Excluding each patient in turn covers every bag once per its group.
        let patients = ["P1", "P2", "P3"];
        let mut excluded_total = 0;
        for p in patients {
            excluded_total += ds.len() - ds.exclude_patient(p).len();
        }
        assert_eq!(excluded_total, ds.len());
    }

    #[test]
    fn bag_file_roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.bag");
        let rows: Vec<Vec<f32>> = vec![vec![0.1, -7.25, 33.0], vec![5.5, 0.0, -0.125]];
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let raw = raw_bag_bytes(3, &refs);
        std::fs::write(&path, &raw).unwrap();

        let bag: EmbeddingBag<f64> = EmbeddingBag::load(&path).unwrap();
        let out = dir.path().join("rt2.bag");
        bag.write(&out).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), raw);
    }
}
