//! Correlation with human judgments, adversarial probes, selection metrics
//! and plot-ready exports.

mod export;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{AdversarialKind, CandidateSet, EvalExample, ProbeExample};
use crate::density::ResponseScorer;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

pub use export::{
    scatter_points, write_histogram_csv, write_json, write_scatter_csv, Histogram, ScatterPoint,
};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("correlation needs at least 2 points".into()));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if let Some(i) = v.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite {
                what: name.into(),
                index: i,
            });
        }
    }
    Ok(())
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidInput("correlation of a constant sequence is undefined".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) hold ranks i+1..=j.
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman_p: Option<f64>,
}

/// Correlates metric scores with the human scores of `examples`.
pub fn correlate(metric_scores: &[f64], examples: &[EvalExample]) -> Result<CorrelationReport> {
    let human: Vec<f64> = examples.iter().map(|e| e.human_score).collect();
    correlate_scores(metric_scores, &human)
}

pub fn correlate_scores(metric: &[f64], human: &[f64]) -> Result<CorrelationReport> {
    Ok(CorrelationReport {
        pearson_r: pearson(metric, human)?,
        spearman_rho: spearman(metric, human)?,
        n: metric.len(),
        pearson_p: None,
        spearman_p: None,
    })
}

/// Two-sided permutation p-value of a correlation statistic: the share of
/// `n_perm` seeded shuffles of `y` whose statistic is at least as extreme,
/// with the usual +1 correction.
pub fn permutation_p_value(
    x: &[f64],
    y: &[f64],
    stat: fn(&[f64], &[f64]) -> Result<f64>,
    n_perm: usize,
    seed: u64,
) -> Result<f64> {
    let observed = stat(x, y)?.abs();
    let mut rng = seed::rng(seed, Stream::Permutation, 0);
    let mut shuffled = y.to_vec();
    let mut hits = 0usize;
    for _ in 0..n_perm {
        shuffled.shuffle(&mut rng);
        if stat(x, &shuffled)?.abs() >= observed - 1e-12 {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (n_perm + 1) as f64)
}

/// [`correlate_scores`] with permutation p-values attached.
pub fn correlate_with_significance(
    metric: &[f64],
    human: &[f64],
    n_perm: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    let mut r = correlate_scores(metric, human)?;
    r.pearson_p = Some(permutation_p_value(metric, human, pearson, n_perm, seed)?);
    r.spearman_p = Some(permutation_p_value(metric, human, spearman, n_perm, seed)?);
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindAccuracy {
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub kinds: BTreeMap<AdversarialKind, KindAccuracy>,
}

impl ProbeReport {
    pub fn accuracy(&self, kind: AdversarialKind) -> Option<f64> {
        self.kinds.get(&kind).map(|k| k.accuracy)
    }
}

/// Per kind, the share of probes where the answer scores strictly above its
/// adversarial variant. Ties count as failures.
pub fn probe_accuracy(examples: &[ProbeExample], scorer: &impl ResponseScorer) -> Result<ProbeReport> {
    let mut items = Vec::with_capacity(2 * examples.len());
    for e in examples {
        let ctx: Vec<&str> = e.context.iter().map(String::as_str).collect();
        items.push((ctx.clone(), e.answer.as_str()));
        items.push((ctx, e.adversarial.as_str()));
    }
    let scores = scorer.score_batch(&items)?;
    let mut tally: BTreeMap<AdversarialKind, (usize, usize)> = BTreeMap::new();
    for (e, s) in examples.iter().zip(scores.chunks_exact(2)) {
        let t = tally.entry(e.kind).or_default();
        t.1 += 1;
        if s[0] > s[1] {
            t.0 += 1;
        }
    }
    Ok(ProbeReport {
        kinds: tally
            .into_iter()
            .map(|(k, (wins, n))| {
                (
                    k,
                    KindAccuracy {
                        accuracy: wins as f64 / n as f64,
                        n,
                    },
                )
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub recall_at_1: f64,
    pub mrr: f64,
    pub n: usize,
}

/// Rank of the positive among `scores` with ties resolved against it.
pub fn worst_case_rank(scores: &[f64], positive: usize) -> usize {
    let p = scores[positive];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| j != positive && s >= p)
        .count()
}

/// Recall@1 and MRR from precomputed candidate scores.
pub fn selection_from_scores(scores: &[Vec<f64>], positive: &[usize]) -> Result<SelectionReport> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: positive.len(),
        });
    }
    if scores.is_empty() {
        return Ok(SelectionReport::default());
    }
    let (mut hits, mut rr) = (0usize, 0.0);
    for (s, &p) in scores.iter().zip(positive) {
        if s.len() < 2 || p >= s.len() {
            return Err(Error::InvalidInput("candidate set needs at least 2 candidates".into()));
        }
        let rank = worst_case_rank(s, p);
        hits += usize::from(rank == 1);
        rr += 1.0 / rank as f64;
    }
    let n = scores.len();
    Ok(SelectionReport {
        recall_at_1: hits as f64 / n as f64,
        mrr: rr / n as f64,
        n,
    })
}

/// Recall@1 and MRR of `scorer` over candidate sets (positive first).
pub fn selection_metrics(sets: &[CandidateSet], scorer: &impl ResponseScorer) -> Result<SelectionReport> {
    let mut items = Vec::new();
    for s in sets {
        let ctx = s.context_texts();
        items.extend(s.candidates().map(|r| (ctx.clone(), r)));
    }
    let flat = scorer.score_batch(&items)?;
    let mut scores = Vec::with_capacity(sets.len());
    let mut k = 0;
    for s in sets {
        scores.push(flat[k..k + s.len()].to_vec());
        k += s.len();
    }
    selection_from_scores(&scores, &vec![0; sets.len()])
}

/// Area under the ROC curve for `positive` scored above `negative`: the
/// probability that a random positive outranks a random negative, ties
/// counting one half.
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::InvalidInput("AUC needs both classes".into()));
    }
    let mut all: Vec<f64> = positive.iter().chain(negative).copied().collect();
    if let Some(i) = all.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "scores".into(),
            index: i,
        });
    }
    let ranks = average_ranks(&all);
    all.clear();
    let n_pos = positive.len() as f64;
    let n_neg = negative.len() as f64;
    let rank_sum: f64 = ranks[..positive.len()].iter().sum();
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Dialogue-level score: the mean of its turn scores.
pub fn dialogue_level(turn_scores: &[f64]) -> Result<f64> {
    if turn_scores.is_empty() {
        return Err(Error::InvalidInput("no turn scores".into()));
    }
    Ok(turn_scores.iter().sum::<f64>() / turn_scores.len() as f64)
}

/// Min–max rescaling to `[0, 1]`.
pub fn normalize_scores(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 scores to normalize".into()));
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::InvalidInput("all scores are equal".into()));
    }
    let span = max - min;
    Ok(scores.iter().map(|s| (s - min) / span).collect())
}

/// Equal-width histogram over `[min, max]`; the last bin includes its right
/// edge.
pub fn histogram(scores: &[f64], n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::InvalidInput("histogram needs at least one bin".into()));
    }
    if scores.is_empty() {
        return Ok(Histogram {
            edges: vec![0.0; n_bins + 1],
            counts: vec![0; n_bins],
        });
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| if i == n_bins { max } else { min + width * i as f64 })
        .collect();
    let mut counts = vec![0; n_bins];
    for &s in scores {
        let bin = if width > 0.0 {
            (((s - min) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        counts[bin] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        // x̄ = 2.5, ȳ = 2.75; sxy = 5.5, sxx = 5, syy = 8.75.
        let oracle = 5.5 / (5.0f64 * 8.75).sqrt();
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 5.0]).unwrap() - oracle).abs() < 1e-14);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 10.0, 100.0, 1000.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 30.0, 20.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tied_ranks_are_averaged() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn selection_rank_arithmetic() {
        let scores = vec![
            vec![0.9, 0.1, 0.2],
            vec![0.5, 0.7, 0.1],
            vec![0.1, 0.4, 0.3, 0.2, 0.0],
        ];
        let r = selection_from_scores(&scores, &[0, 0, 0]).unwrap();
        assert!((r.recall_at_1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.mrr - 1.75 / 3.0).abs() < 1e-15);
        assert!((r.mrr - 0.5833).abs() < 1e-4);
    }

    #[test]
    fn ties_count_against_positive() {
        let r = selection_from_scores(&[vec![1.0, 1.0, 0.0]], &[0]).unwrap();
        assert_eq!(r.recall_at_1, 0.0);
        assert_eq!(r.mrr, 0.5);
    }

    #[test]
    fn auc_counts_pairs() {
        assert_eq!(auc(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(auc(&[1.0], &[2.0]).unwrap(), 0.0);
        // pairs: (2>1) (2=2 half) (2<3) -> 1.5 / 3
        assert_eq!(auc(&[2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.5);
        assert!(auc(&[], &[1.0]).is_err());
    }

    #[test]
    fn dialogue_level_mean() {
        assert_eq!(dialogue_level(&[0.3]).unwrap(), 0.3);
        assert_eq!(dialogue_level(&[-1.0, 1.0]).unwrap(), 0.0);
        let s = [-2.5, -1.0, -0.5, -3.0, -1.5];
        assert!((dialogue_level(&s).unwrap() + 1.7).abs() < 1e-15);
        assert!(dialogue_level(&[]).is_err());
    }

    #[test]
    fn min_max_normalization() {
        assert_eq!(normalize_scores(&[-2.0, 0.0, 2.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_scores(&[0.0, 0.25, 1.0]).unwrap(), vec![0.0, 0.25, 1.0]);
        assert!(normalize_scores(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn histogram_bins() {
        assert_eq!(histogram(&[1.0, 2.0, 3.0, 4.0], 1).unwrap().counts, vec![4]);
        let h = histogram(&[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(h.counts, vec![2, 2]);
        assert_eq!(h.edges, vec![0.0, 1.5, 3.0]);
        assert!(histogram(&[1.0], 0).is_err());
    }

    #[test]
    fn permutation_p_value_is_small_for_strong_signal() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + (v * 1.7).sin()).collect();
        let p = permutation_p_value(&x, &y, pearson, 999, 1).unwrap();
        assert!((p - 0.001).abs() < 1e-12);
        let r = correlate_with_significance(&x, &y, 99, 1).unwrap();
        assert!(r.spearman_p.unwrap() <= 0.01 + 1e-12);
    }
}
