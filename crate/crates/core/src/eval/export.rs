//! JSON reports and CSV plot data.

use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::normalize_scores;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Standard deviation of the optional visual jitter on human scores.
pub const JITTER_STD: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub human_score: f64,
    pub metric_score: f64,
}

/// Scatter data with both axes min–max normalized. With `jitter_seed`,
/// Gaussian noise (std 0.03) is added to the human axis. Only the exported
/// points are jittered, never any statistic.
pub fn scatter_points(human: &[f64], metric: &[f64], jitter_seed: Option<u64>) -> Result<Vec<ScatterPoint>> {
    if human.len() != metric.len() {
        return Err(Error::DimensionMismatch {
            expected: human.len(),
            actual: metric.len(),
        });
    }
    let mut h = normalize_scores(human)?;
    let m = normalize_scores(metric)?;
    if let Some(seed) = jitter_seed {
        let noise = Normal::new(0.0, JITTER_STD).expect("valid std");
        let mut rng = seed::rng(seed, Stream::Jitter, 0);
        for v in &mut h {
            *v += noise.sample(&mut rng);
        }
    }
    Ok(h.into_iter()
        .zip(m)
        .map(|(human_score, metric_score)| ScatterPoint {
            human_score,
            metric_score,
        })
        .collect())
}

fn write_lines(path: &Path, header: &str, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for l in lines {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_scatter_csv(path: impl AsRef<Path>, points: &[ScatterPoint]) -> Result<()> {
    write_lines(
        path.as_ref(),
        "human_score,metric_score",
        points.iter().map(|p| format!("{},{}", p.human_score, p.metric_score)),
    )
}

pub fn write_histogram_csv(path: impl AsRef<Path>, hist: &super::Histogram) -> Result<()> {
    write_lines(
        path.as_ref(),
        "bin_left,bin_right,count",
        hist.counts
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{},{},{}", hist.edges[i], hist.edges[i + 1], c)),
    )
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_normalizes_and_jitters_only_human_axis() {
        let human = [1.0, 3.0, 5.0];
        let metric = [-4.0, -2.0, 0.0];
        let plain = scatter_points(&human, &metric, None).unwrap();
        assert_eq!(plain[1], ScatterPoint { human_score: 0.5, metric_score: 0.5 });
        let jit = scatter_points(&human, &metric, Some(3)).unwrap();
        assert_eq!(jit, scatter_points(&human, &metric, Some(3)).unwrap());
        for (a, b) in plain.iter().zip(&jit) {
            assert_eq!(a.metric_score, b.metric_score);
            assert_ne!(a.human_score, b.human_score);
            assert!((a.human_score - b.human_score).abs() < 0.2);
        }
    }

    #[test]
    fn csv_headers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let hist = super::super::histogram(&[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        write_histogram_csv(&p, &hist).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "bin_left,bin_right,count\n0,1.5,2\n1.5,3,2\n");
    }
}
