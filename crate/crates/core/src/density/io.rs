//! DENSG1 model files.
//!
//! `"DENSG1"`, `d` (u32), `N` (u64), `rtol` (f64), then `mu` (d),
//! `Sigma` (d*d, row-major), `Sigma^+` (d*d, row-major) and the singular
//! values (d). Everything little-endian, floats as f64.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::GaussianModel;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"DENSG1";
const HEADER_LEN: usize = 6 + 4 + 8 + 8;

fn encode(model: &GaussianModel) -> Vec<u8> {
    let d = model.dim();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * (2 * d + 2 * d * d));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&model.n_fitted.to_le_bytes());
    buf.extend_from_slice(&model.pinv_rtol.to_le_bytes());
    let mut put = |v: f64| buf.extend_from_slice(&v.to_le_bytes());
    model.mu.iter().for_each(|&v| put(v));
    // nalgebra is column-major; the file is row-major.
    for m in [&model.sigma, &model.sigma_pinv] {
        for i in 0..d {
            for j in 0..d {
                put(m[(i, j)]);
            }
        }
    }
    model.singular_values.iter().for_each(|&v| put(v));
    buf
}

pub fn save_model(model: &GaussianModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GaussianModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "DENSG1".into(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let d = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let n_fitted = u64::from_le_bytes(bytes[10..18].try_into().expect("8 bytes"));
    let pinv_rtol = f64::from_le_bytes(bytes[18..26].try_into().expect("8 bytes"));
    let expected = HEADER_LEN + 8 * (2 * d + 2 * d * d);
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    let mut vals = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |n: usize| -> Vec<f64> { vals.by_ref().take(n).collect() };
    let mu = DVector::from_vec(take(d));
    let sigma = DMatrix::from_row_slice(d, d, &take(d * d));
    let sigma_pinv = DMatrix::from_row_slice(d, d, &take(d * d));
    let singular_values = DVector::from_vec(take(d));
    let all = mu
        .iter()
        .chain(sigma.iter())
        .chain(sigma_pinv.iter())
        .chain(singular_values.iter());
    for (i, v) in all.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: format!("model file {}", path.display()),
                index: i,
            });
        }
    }
    Ok(GaussianModel {
        mu,
        sigma,
        sigma_pinv,
        pinv_rtol,
        n_fitted,
        singular_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{fit, ScoreFunction};
    use crate::encoder::{FeatureMatrix, Provenance};

    fn model() -> GaussianModel {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64;
                vec![t.sin(), (1.3 * t).cos(), 0.1 * t]
            })
            .collect();
        fit(&FeatureMatrix::from_rows(&rows, 3, Provenance::ExternalFile).unwrap()).unwrap()
    }

    #[test]
    fn roundtrip_scores_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.densg");
        let m = model();
        save_model(&m, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back, m);
        for q in [[0.1, 0.2, 0.3], [5.0, -1.0, 2.0]] {
            let a = m.score(&q, ScoreFunction::MahalanobisSqrt, None).unwrap();
            let b = back.score(&q, ScoreFunction::MahalanobisSqrt, None).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(matches!(
            back.score(&[1.0, 2.0], ScoreFunction::MahalanobisSqrt, None),
            Err(Error::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn corrupted_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.densg");
        let mut bytes = encode(&model());
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_model(&p), Err(Error::Truncated { .. })));
        std::fs::write(&p, b"DENSF1\0\0").unwrap();
        assert!(matches!(load_model(&p), Err(Error::BadMagic { .. })));
    }
}
