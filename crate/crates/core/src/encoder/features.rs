//! Feature matrices and the DENSF1 exchange format.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "DENSF1\0\0"   8 bytes
//! N              u32
//! d              u32
//! N*d values     f32, row-major
//! ```
//!
//! An optional sidecar `<file>.ids.jsonl` maps row indices to pair ids.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DENSF1\0\0";
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    TrainedEncoder,
    ExternalFile,
}

/// `N x d` features, one row per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    pub provenance: Provenance,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "feature matrix".into(),
                index: i,
            });
        }
        Ok(FeatureMatrix {
            rows,
            dim,
            data,
            provenance,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], dim: usize, provenance: Provenance) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data, provenance)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Sidecar path `<file>.ids.jsonl`.
pub fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids.jsonl");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowId {
    pub row: usize,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

/// Writes `features` as DENSF1. Values are narrowed to f32.
pub fn save_features(path: impl AsRef<Path>, features: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * features.data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(features.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(features.dim as u32).to_le_bytes());
    for v in &features.data {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn save_feature_ids(path: impl AsRef<Path>, ids: &[String]) -> Result<()> {
    let path = ids_path(path.as_ref());
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (row, id) in ids.iter().enumerate() {
        let rec = RowId {
            row,
            id: id.clone(),
            provenance: None,
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable"))
            .map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Reads the ids sidecar of a DENSF1 file, ordered by row.
pub fn load_feature_ids(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = ids_path(path.as_ref());
    let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut recs = Vec::new();
    for (i, line) in raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: RowId = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        recs.push(rec);
    }
    recs.sort_by_key(|r| r.row);
    if recs.iter().enumerate().any(|(i, r)| r.row != i) {
        return Err(Error::InvalidInput(format!("{}: rows are not 0..N", path.display())));
    }
    Ok(recs.into_iter().map(|r| r.id).collect())
}

pub fn load_external_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

fn decode(path: &Path, bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "DENSF1\\0\\0".into(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let expected = HEADER_LEN + 4 * rows * dim;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    FeatureMatrix::new(rows, dim, data, Provenance::ExternalFile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    fn header(n: u32, d: u32) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&n.to_le_bytes());
        b.extend_from_slice(&d.to_le_bytes());
        b
    }

    #[test]
    fn decodes_two_by_three() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = header(2, 3);
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.5] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(b.len(), 16 + 24);
        let m = load_external_features(write_raw(dir.path(), "f.bin", &b)).unwrap();
        assert_eq!((m.rows(), m.dim()), (2, 3));
        assert_eq!(m.row(1), &[4.0, 5.0, 6.5]);
        assert_eq!(m.provenance, Provenance::ExternalFile);
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = header(2, 3);
        b.extend_from_slice(&[0u8; 20]);
        match load_external_features(write_raw(dir.path(), "t.bin", &b)).unwrap_err() {
            Error::Truncated { expected, actual, .. } => assert_eq!((expected, actual), (40, 36)),
            e => panic!("{e}"),
        }
        let mut bad = b"DENSF2\0\0".to_vec();
        bad.extend_from_slice(&[0u8; 8]);
        assert!(matches!(
            load_external_features(write_raw(dir.path(), "m.bin", &bad)),
            Err(Error::BadMagic { .. })
        ));
        let mut nan = header(1, 2);
        nan.extend_from_slice(&1.0f32.to_le_bytes());
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            load_external_features(write_raw(dir.path(), "n.bin", &nan)),
            Err(Error::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn ids_sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        let ids = vec!["a#1".to_string(), "b#2".to_string()];
        save_feature_ids(&p, &ids).unwrap();
        assert_eq!(load_feature_ids(&p).unwrap(), ids);
        assert!(ids_path(&p).to_string_lossy().ends_with("f.bin.ids.jsonl"));
    }
}
