//! Pinned 20-example evaluation fixture. Expected values were computed
//! once with an independent statistics package and stored beside the inputs.

use std::path::{Path, PathBuf};
use std::process::Command;

use density_eval::cli::read_scores_csv;
use density_eval::corpus;
use density_eval::eval::{self, CorrelationReport};
use serde::Deserialize;

#[derive(Deserialize)]
struct Expected {
    pearson_r: f64,
    spearman_rho: f64,
    histogram_counts: Vec<usize>,
    histogram_edges: Vec<f64>,
    normalized: Vec<f64>,
    auc_high_vs_low: f64,
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn expected() -> Expected {
    serde_json::from_str(&std::fs::read_to_string(fixture("eval20_expected.json")).unwrap()).unwrap()
}

fn inputs() -> (Vec<f64>, Vec<f64>) {
    let examples = corpus::load_eval_dataset(fixture("eval20.jsonl")).unwrap();
    let metric = read_scores_csv(&fixture("eval20_scores.csv")).unwrap();
    assert_eq!(examples.len(), 20);
    assert_eq!(metric.len(), 20);
    (metric, examples.iter().map(|e| e.human_score).collect())
}

#[test]
fn correlations_match_pinned_values() {
    let (metric, human) = inputs();
    let want = expected();
    let got = eval::correlate_scores(&metric, &human).unwrap();
    assert!((got.pearson_r - want.pearson_r).abs() < 1e-12, "{} vs {}", got.pearson_r, want.pearson_r);
    assert!((got.spearman_rho - want.spearman_rho).abs() < 1e-12, "{} vs {}", got.spearman_rho, want.spearman_rho);
}

#[test]
fn histogram_and_normalization_match_pinned_values() {
    let (metric, _) = inputs();
    let want = expected();
    let h = eval::histogram(&metric, 5).unwrap();
    assert_eq!(h.counts, want.histogram_counts);
    for (a, b) in h.edges.iter().zip(&want.histogram_edges) {
        assert!((a - b).abs() < 1e-12);
    }
    let n = eval::normalize_scores(&metric).unwrap();
    for (a, b) in n.iter().zip(&want.normalized) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn auc_matches_rank_sum_statistic() {
    let (metric, human) = inputs();
    let (pos, neg): (Vec<_>, Vec<_>) = metric.iter().zip(&human).partition(|(_, &h)| h >= 4.0);
    let pos: Vec<f64> = pos.into_iter().map(|(m, _)| *m).collect();
    let neg: Vec<f64> = neg.into_iter().map(|(m, _)| *m).collect();
    let got = eval::auc(&pos, &neg).unwrap();
    assert!((got - expected().auc_high_vs_low).abs() < 1e-12);
}

#[test]
fn cli_eval_reproduces_pinned_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_density-eval"))
        .args(["eval", "--eval-dataset"])
        .arg(fixture("eval20.jsonl"))
        .arg("--scores")
        .arg(fixture("eval20_scores.csv"))
        .args(["--permutations", "200", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: CorrelationReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eval_report.json")).unwrap()).unwrap();
    let want = expected();
    assert_eq!(report.n, 20);
    assert!((report.pearson_r - want.pearson_r).abs() < 1e-12);
    assert!((report.spearman_rho - want.spearman_rho).abs() < 1e-12);
    let p = report.pearson_p.unwrap();
    assert!(p > 0.0 && p < 0.05, "p = {p}");
}
