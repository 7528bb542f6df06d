use density_eval::corpus::{self, make_adversarial, synth_corpus, AdversarialKind, CandidateSet, ProbeSet};
use density_eval::density::{self, GaussianModel, ScoreFunction};
use density_eval::encoder::{self, features, words, FeatureMatrix, Provenance};
use density_eval::eval;
use density_eval::training::{self, lr_schedule};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows, rows[0].len(), Provenance::ExternalFile).unwrap()
}

fn rows_strategy(d: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n)
}

fn unit_rows(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n).prop_map(|rows| {
        rows.into_iter()
            .map(|r| {
                let n = r.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
                r.into_iter().map(|x| x / n).collect()
            })
            .collect()
    })
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z]{1,6}", 1..8).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pairs_take_the_full_prefix(n in 1usize..20, seed in any::<u64>(), min_context in 1usize..3) {
        let ds = synth_corpus(n, seed);
        let pairs = corpus::build_pairs(&ds, min_context).unwrap();
        let expected: usize = ds.iter().map(|d| d.turns.len().saturating_sub(min_context)).sum();
        prop_assert_eq!(pairs.len(), expected);
        for p in &pairs {
            let d = ds.iter().find(|d| d.id == p.dialogue_id).unwrap();
            let t = p.context.len();
            prop_assert!(t >= min_context);
            prop_assert_eq!(&p.context[..], &d.turns[..t]);
            prop_assert_eq!(&p.response, &d.turns[t].text);
        }
    }

    #[test]
    fn negatives_are_a_function_of_inputs(seed in any::<u64>(), k in 1usize..10) {
        let pairs = corpus::build_pairs(&synth_corpus(40, 3), 1).unwrap();
        let a = corpus::sample_negatives(&pairs, k, seed).unwrap();
        let b = corpus::sample_negatives(&pairs, k, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for s in &a {
            prop_assert_eq!(s.negatives.len(), k);
            prop_assert!(!s.negatives.contains(&s.positive));
        }
    }

    #[test]
    fn synth_corpus_is_deterministic(n in 1usize..30, seed in any::<u64>()) {
        prop_assert_eq!(synth_corpus(n, seed), synth_corpus(n, seed));
    }

    #[test]
    fn repetition_doubles_tokens(answer in sentence(), seed in any::<u64>()) {
        let out = make_adversarial(&answer, &["hello ."], AdversarialKind::Repetition, &[], seed).unwrap();
        prop_assert_eq!(words(&out).len(), 2 * words(&answer).len());
    }

    #[test]
    fn speaker_sensitive_prefixes_last_turn(answer in sentence(), ctx in prop::collection::vec(sentence(), 1..4)) {
        let c: Vec<&str> = ctx.iter().map(String::as_str).collect();
        let out = make_adversarial(&answer, &c, AdversarialKind::SpeakerSensitive, &[], 0).unwrap();
        prop_assert!(out.starts_with(c.last().unwrap()));
    }

    #[test]
    fn normalize_gives_unit_or_zero(h in prop::collection::vec(-1e3f64..1e3, 1..16)) {
        let n = encoder::normalize(&h).iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(n == 0.0 || (n - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn densf1_roundtrip_is_bit_exact(rows in 1usize..20, dim in 1usize..10, seed in any::<u32>()) {
        // Values are f32-representable, the on-disk precision.
        let data: Vec<f64> = (0..rows * dim)
            .map(|i| f64::from(((i as u32).wrapping_mul(2_654_435_761) ^ seed) as f32 / 1e6))
            .collect();
        let m = FeatureMatrix::new(rows, dim, data, Provenance::ExternalFile).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.densf");
        features::save_features(&p, &m).unwrap();
        let back = features::load_external_features(&p).unwrap();
        prop_assert_eq!(back.rows(), rows);
        prop_assert_eq!(back.dim(), dim);
        let same = back.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn loss_rs_properties(logits in prop::collection::vec(-20.0f64..20.0, 2..12), shift in -100.0f64..100.0, bump in 0.01f64..5.0) {
        let base = training::loss_rs(&logits, 0).unwrap();
        prop_assert!(base >= 0.0);
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        prop_assert!((training::loss_rs(&shifted, 0).unwrap() - base).abs() <= 1e-9);
        let mut up = logits.clone();
        up[0] += bump;
        prop_assert!(training::loss_rs(&up, 0).unwrap() < base || base == 0.0);
    }

    #[test]
    fn loss_cl_rotation_invariant(z in unit_rows(6, 2), angle in 0.0f64..std::f64::consts::TAU, tau in 0.05f64..2.0) {
        let (s, c) = angle.sin_cos();
        let rot: Vec<Vec<f64>> = z.iter().map(|r| vec![c * r[0] - s * r[1], s * r[0] + c * r[1]]).collect();
        let pos = [0, 2, 4];
        let a = training::loss_cl(&z, &pos, tau).unwrap();
        let b = training::loss_cl(&rot, &pos, tau).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn loss_cl_depends_on_tau_only_through_ratio(z in unit_rows(6, 3), tau in 0.05f64..2.0, scale in 0.2f64..5.0) {
        // Scaling every row by sqrt(scale) scales dot products by `scale`.
        let r = scale.sqrt();
        let scaled: Vec<Vec<f64>> = z.iter().map(|row| row.iter().map(|x| x * r).collect()).collect();
        let pos = [1, 3, 5];
        let a = training::loss_cl(&z, &pos, tau).unwrap();
        let b = training::loss_cl(&scaled, &pos, tau * scale).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn lr_schedule_is_piecewise_linear(warmup in 1u64..200, extra in 2u64..500, base in 1e-6f64..1.0) {
        let total = warmup + extra;
        let peak = lr_schedule(warmup, warmup, total, base);
        prop_assert!((peak - base).abs() <= 1e-15 * base.max(1.0));
        let mut prev_delta: Option<f64> = None;
        for step in 0..=total {
            let lr = lr_schedule(step, warmup, total, base);
            prop_assert!(lr <= peak + 1e-15);
            prop_assert!(lr >= 0.0);
            if step > 0 {
                let delta = lr - lr_schedule(step - 1, warmup, total, base);
                // Continuity: no jump larger than one step of either slope.
                prop_assert!(delta.abs() <= base / warmup.min(extra) as f64 + 1e-12);
                if step != warmup + 1 && step != 1 {
                    if let Some(p) = prev_delta {
                        prop_assert!((delta - p).abs() <= 1e-12);
                    }
                }
                prev_delta = Some(delta);
            }
        }
        prop_assert_eq!(lr_schedule(total, warmup, total, base), 0.0);
    }

    #[test]
    fn mahalanobis_scores_are_non_positive(rows in rows_strategy(3, 2..30), h in prop::collection::vec(-10.0f64..10.0, 3)) {
        let m = density::fit(&fm(&rows)).unwrap();
        for f in [ScoreFunction::MahalanobisSqrt, ScoreFunction::MahalanobisSquared] {
            prop_assert!(m.score(&h, f, None).unwrap() <= 0.0);
        }
    }

    #[test]
    fn isotropic_covariance_gives_scaled_euclidean(sigma in 0.1f64..10.0, h in prop::collection::vec(-10.0f64..10.0, 4), mu in prop::collection::vec(-3.0f64..3.0, 4)) {
        let s = DMatrix::identity(4, 4) * (sigma * sigma);
        let model = GaussianModel {
            mu: DVector::from_vec(mu.clone()),
            sigma_pinv: density::pinv(&s, density::default_rtol(4)).unwrap(),
            sigma: s,
            pinv_rtol: density::default_rtol(4),
            n_fitted: 10,
            singular_values: DVector::from_element(4, sigma * sigma),
        };
        let dist = h.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let got = model.score(&h, ScoreFunction::MahalanobisSqrt, None).unwrap();
        prop_assert!((got + dist / sigma).abs() <= 1e-9 * dist.max(1.0) / sigma.min(1.0));
    }

    #[test]
    fn affine_invariance(rows in rows_strategy(3, 30..60), mix in prop::collection::vec(-0.3f64..0.3, 9), shift in prop::collection::vec(-5.0f64..5.0, 3), h in prop::collection::vec(-5.0f64..5.0, 3)) {
        let m = density::fit(&fm(&rows)).unwrap();
        let sv = &m.singular_values;
        prop_assume!(sv[2] > 0.0 && sv[0] / sv[2] <= 1e6);
        let a = DMatrix::from_fn(3, 3, |i, j| mix[3 * i + j] + f64::from(u8::from(i == j)));
        let apply = |v: &[f64]| -> Vec<f64> {
            (&a * DVector::from_column_slice(v)).iter().zip(&shift).map(|(x, s)| x + s).collect()
        };
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| apply(r)).collect();
        let m2 = density::fit(&fm(&moved)).unwrap();
        let sv2 = &m2.singular_values;
        prop_assume!(sv2[2] > 0.0 && sv2[0] / sv2[2] <= 1e6);
        let s1 = m.score(&h, ScoreFunction::MahalanobisSqrt, None).unwrap();
        let s2 = m2.score(&apply(&h), ScoreFunction::MahalanobisSqrt, None).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-6, "{} vs {}", s1, s2);
    }

    #[test]
    fn sqrt_and_squared_rank_alike(rows in rows_strategy(3, 5..30), queries in rows_strategy(3, 2..20)) {
        let m = density::fit(&fm(&rows)).unwrap();
        let a: Vec<f64> = queries.iter().map(|q| m.score(q, ScoreFunction::MahalanobisSqrt, None).unwrap()).collect();
        let b: Vec<f64> = queries.iter().map(|q| m.score(q, ScoreFunction::MahalanobisSquared, None).unwrap()).collect();
        prop_assert_eq!(eval::average_ranks(&a), eval::average_ranks(&b));
    }

    #[test]
    fn fit_is_permutation_invariant(rows in rows_strategy(4, 2..80), rot in 0usize..80) {
        let a = density::fit(&fm(&rows)).unwrap();
        let mut shuffled = rows.clone();
        shuffled.reverse();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let b = density::fit(&fm(&shuffled)).unwrap();
        prop_assert!((&a.mu - &b.mu).amax() <= 1e-10);
        prop_assert!((&a.sigma - &b.sigma).amax() <= 1e-10);
    }

    #[test]
    fn moore_penrose_on_fitted_covariance(rows in rows_strategy(4, 2..12)) {
        let m = density::fit(&fm(&rows)).unwrap();
        let (s, p) = (&m.sigma, &m.sigma_pinv);
        let rel = |x: DMatrix<f64>, y: &DMatrix<f64>| (x - y).norm() / y.norm().max(f64::MIN_POSITIVE);
        prop_assert!(rel(s * p * s, s) <= 1e-7);
        prop_assert!(rel(p * s * p, p) <= 1e-7);
    }

    #[test]
    fn pearson_affine_behaviour(x in prop::collection::vec(-10.0f64..10.0, 3..40), y_noise in prop::collection::vec(-10.0f64..10.0, 40), a in 0.1f64..10.0, b in -10.0f64..10.0) {
        let y = &y_noise[..x.len()];
        prop_assume!(eval::pearson(&x, y).is_ok());
        let r = eval::pearson(&x, y).unwrap();
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let neg: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
        prop_assert!((eval::pearson(&ax, y).unwrap() - r).abs() <= 1e-9);
        prop_assert!((eval::pearson(&neg, y).unwrap() + r).abs() <= 1e-9);
    }

    #[test]
    fn spearman_ignores_monotone_transforms(x in prop::collection::vec(-5.0f64..5.0, 3..40), y_src in prop::collection::vec(-5.0f64..5.0, 40)) {
        let y = &y_src[..x.len()];
        prop_assume!(eval::spearman(&x, y).is_ok());
        let tx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        prop_assume!(eval::average_ranks(&tx) == eval::average_ranks(&x));
        prop_assert_eq!(eval::spearman(&tx, y).unwrap(), eval::spearman(&x, y).unwrap());
    }

    #[test]
    fn recall_bounded_by_mrr(sets in prop::collection::vec(prop::collection::vec(0u8..5, 2..10), 1..30), pos_seed in any::<u64>()) {
        let scores: Vec<Vec<f64>> = sets.iter().map(|s| s.iter().map(|&v| f64::from(v)).collect()).collect();
        let positive: Vec<usize> = scores.iter().enumerate().map(|(i, s)| (pos_seed as usize).wrapping_add(i) % s.len()).collect();
        let r = eval::selection_from_scores(&scores, &positive).unwrap();
        prop_assert!(0.0 <= r.recall_at_1 && r.recall_at_1 <= r.mrr && r.mrr <= 1.0);
    }

    #[test]
    fn normalize_scores_keeps_order(x in prop::collection::vec(-1e3f64..1e3, 2..50)) {
        prop_assume!(x.iter().any(|v| *v != x[0]));
        let n = eval::normalize_scores(&x).unwrap();
        for i in 0..x.len() {
            for j in 0..x.len() {
                if x[i] < x[j] {
                    prop_assert!(n[i] <= n[j]);
                }
            }
        }
        prop_assert!(n.iter().cloned().fold(f64::INFINITY, f64::min) == 0.0);
        prop_assert!(n.iter().cloned().fold(f64::NEG_INFINITY, f64::max) == 1.0);
    }

    #[test]
    fn histogram_counts_every_score(x in prop::collection::vec(-1e3f64..1e3, 1..100), bins in 1usize..30) {
        let h = eval::histogram(&x, bins).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<usize>(), x.len());
    }
}

/// Deterministic pseudo-score of a text.
fn text_score(ctx: &[&str], r: &str) -> f64 {
    let mut h: u64 = 1469598103934665603;
    for b in ctx.concat().bytes().chain(r.bytes()) {
        h = (h ^ u64::from(b)).wrapping_mul(1099511628211);
    }
    (h % 1000) as f64 / 100.0 - 5.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rank_metrics_ignore_monotone_scorer_transforms(seed in any::<u64>(), a in 0.1f64..5.0) {
        let ds = synth_corpus(30, seed);
        let pairs = corpus::build_pairs(&ds, 1).unwrap();
        let sets: Vec<CandidateSet> = corpus::sample_negatives(&pairs, 5, seed).unwrap();
        let probes = ProbeSet::build(&pairs, &pairs, seed).unwrap();
        let transformed = |c: &[&str], r: &str| (a * text_score(c, r)).exp();
        prop_assert_eq!(
            eval::selection_metrics(&sets, &text_score).unwrap(),
            eval::selection_metrics(&sets, &transformed).unwrap()
        );
        prop_assert_eq!(
            eval::probe_accuracy(&probes.examples, &text_score).unwrap(),
            eval::probe_accuracy(&probes.examples, &transformed).unwrap()
        );
    }
}
