//! Single-class Gaussian over positive-pair features and Mahalanobis scoring.
//!
//! Fitting uses the maximum-likelihood estimates (divisor `N`):
//!
//! ```text
//! mu    = 1/N * sum_i h_i
//! Sigma = 1/N * sum_i (h_i - mu)(h_i - mu)^T
//! ```
//!
//! A response with feature `h` scores `-sqrt(q)` where
//! `q = (h - mu)^T Sigma^+ (h - mu)` and `Sigma^+` is the Moore–Penrose
//! pseudo-inverse. All scores are "higher is better".

mod io;
mod scorer;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::FeatureMatrix;
use crate::error::{Error, Result};

pub use io::{load_model, save_model, MAGIC};
pub use scorer::{DensityScorer, ResponseScorer};

/// Rows per partial sum in [`fit`]. Partial sums are combined pairwise in a
/// fixed tree, so the result does not depend on the thread count.
const FIT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreFunction {
    /// `-sqrt(q)`.
    #[default]
    MahalanobisSqrt,
    /// `-q`.
    MahalanobisSquared,
    /// `-|h - mu|`.
    Euclidean,
    /// The selection model's own logit `f(c, r)`.
    Classifier,
}

impl ScoreFunction {
    pub const ALL: [ScoreFunction; 4] = [
        ScoreFunction::MahalanobisSqrt,
        ScoreFunction::MahalanobisSquared,
        ScoreFunction::Euclidean,
        ScoreFunction::Classifier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreFunction::MahalanobisSqrt => "mahalanobis-sqrt",
            ScoreFunction::MahalanobisSquared => "mahalanobis-squared",
            ScoreFunction::Euclidean => "euclidean",
            ScoreFunction::Classifier => "classifier",
        }
    }
}

impl fmt::Display for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ScoreFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreFunction::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown score function {s:?}")))
    }
}

/// Fitted distribution of human context–response features.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_pinv: DMatrix<f64>,
    pub pinv_rtol: f64,
    pub n_fitted: u64,
    /// Singular values of `sigma`, descending.
    pub singular_values: DVector<f64>,
}

/// Default relative cutoff for [`pinv`]: `d * machine epsilon`.
pub fn default_rtol(dim: usize) -> f64 {
    dim as f64 * f64::EPSILON
}

fn pairwise_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Fits mean and covariance with the default pseudo-inverse cutoff.
pub fn fit(features: &FeatureMatrix) -> Result<GaussianModel> {
    fit_with_rtol(features, default_rtol(features.dim()))
}

pub fn fit_with_rtol(features: &FeatureMatrix, rtol: f64) -> Result<GaussianModel> {
    let n = features.rows();
    let d = features.dim();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 features to fit, got {n}")));
    }
    if d == 0 {
        return Err(Error::InvalidInput("features have dimension 0".into()));
    }
    if let Some(i) = features.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "features".into(),
            index: i,
        });
    }
    let data = features.as_slice();
    let sums: Vec<Vec<f64>> = data
        .par_chunks(FIT_CHUNK * d)
        .map(|chunk| {
            let mut s = vec![0.0; d];
            for row in chunk.chunks_exact(d) {
                for (a, v) in s.iter_mut().zip(row) {
                    *a += v;
                }
            }
            s
        })
        .collect();
    let inv_n = 1.0 / n as f64;
    let mu: Vec<f64> = pairwise_sum(sums).into_iter().map(|s| s * inv_n).collect();

    // Upper triangle only, row-major packed.
    let tri = d * (d + 1) / 2;
    let outer: Vec<Vec<f64>> = data
        .par_chunks(FIT_CHUNK * d)
        .map(|chunk| {
            let mut s = vec![0.0; tri];
            let mut dev = vec![0.0; d];
            for row in chunk.chunks_exact(d) {
                for ((o, v), m) in dev.iter_mut().zip(row).zip(&mu) {
                    *o = v - m;
                }
                let mut k = 0;
                for i in 0..d {
                    let di = dev[i];
                    for dj in &dev[i..] {
                        s[k] += di * dj;
                        k += 1;
                    }
                }
            }
            s
        })
        .collect();
    let packed = pairwise_sum(outer);
    let mut sigma = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            let v = packed[k] * inv_n;
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
            k += 1;
        }
    }
    let (sigma_pinv, singular_values) = pinv_with_spectrum(&sigma, rtol)?;
    Ok(GaussianModel {
        mu: DVector::from_vec(mu),
        sigma,
        sigma_pinv,
        pinv_rtol: rtol,
        n_fitted: n as u64,
        singular_values,
    })
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix. Singular
/// values below `rtol * sigma_max` count as zero.
pub fn pinv(sigma: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    pinv_with_spectrum(sigma, rtol).map(|(p, _)| p)
}

fn pinv_with_spectrum(sigma: &DMatrix<f64>, rtol: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let d = sigma.nrows();
    if sigma.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: sigma.ncols(),
        });
    }
    if !(rtol >= 0.0) {
        return Err(Error::InvalidInput(format!("rtol must be non-negative, got {rtol}")));
    }
    if let Some(i) = sigma.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "covariance".into(),
            index: i,
        });
    }
    // For a symmetric matrix the singular values are the absolute
    // eigenvalues. The symmetric eigensolver stays accurate on rank-deficient
    // input where the general SVD can return a wrong factorization.
    let eig = sigma.clone().symmetric_eigen();
    let s: Vec<f64> = eig.eigenvalues.iter().map(|l| l.abs()).collect();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigendecomposition failed".into()));
    }
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let cutoff = rtol * s_max;
    let mut p = DMatrix::zeros(d, d);
    for (k, &sk) in s.iter().enumerate() {
        if sk > 0.0 && sk >= cutoff {
            let inv = 1.0 / eig.eigenvalues[k];
            let v = eig.eigenvectors.column(k);
            // p += v_k v_k^T / lambda_k
            for i in 0..d {
                let vi = v[i] * inv;
                for j in 0..d {
                    p[(i, j)] += vi * v[j];
                }
            }
        }
    }
    let p = (&p + p.transpose()) * 0.5;
    let mut sv = s;
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok((p, DVector::from_vec(sv)))
}

impl GaussianModel {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn check_dim(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: h.len(),
            });
        }
        Ok(())
    }

    /// `(h - mu)^T Sigma^+ (h - mu)`, clamped at zero. Values within the
    /// rounding error of the product, `d * eps * |delta|^T |Sigma^+| |delta|`,
    /// are reported as zero, so null-space directions score exactly 0.
    pub fn quadratic_form(&self, h: &[f64]) -> Result<f64> {
        self.check_dim(h)?;
        let delta = DVector::from_iterator(h.len(), h.iter().zip(self.mu.iter()).map(|(a, m)| a - m));
        let q = delta.dot(&(&self.sigma_pinv * &delta));
        let abs_delta = delta.abs();
        let bound = abs_delta.dot(&(self.sigma_pinv.abs() * &abs_delta));
        if q <= self.dim() as f64 * f64::EPSILON * bound {
            return Ok(0.0);
        }
        Ok(q)
    }

    /// Mahalanobis distance `sqrt(q)`.
    pub fn distance(&self, h: &[f64]) -> Result<f64> {
        self.quadratic_form(h).map(f64::sqrt)
    }

    /// Score of feature `h` under `function`. [`ScoreFunction::Classifier`]
    /// passes `classifier_score` through and requires it.
    pub fn score(&self, h: &[f64], function: ScoreFunction, classifier_score: Option<f64>) -> Result<f64> {
        self.check_dim(h)?;
        match function {
            // `0.0 - x` keeps a zero score at +0.
            ScoreFunction::MahalanobisSqrt => Ok(0.0 - self.quadratic_form(h)?.sqrt()),
            ScoreFunction::MahalanobisSquared => Ok(0.0 - self.quadratic_form(h)?),
            ScoreFunction::Euclidean => Ok(0.0
                - h.iter()
                    .zip(self.mu.iter())
                    .map(|(a, m)| (a - m) * (a - m))
                    .sum::<f64>()
                    .sqrt()),
            ScoreFunction::Classifier => classifier_score.ok_or_else(|| {
                Error::InvalidInput("classifier scoring needs the classifier score".into())
            }),
        }
    }
}
