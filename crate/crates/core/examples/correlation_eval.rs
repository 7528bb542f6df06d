//! Correlates metric scores with human judgments: Pearson, Spearman and
//! permutation p-values, plus a dialogue-level aggregate.
//!
//! cargo run --example correlation_eval

use density_eval::corpus::EvalExample;
use density_eval::eval;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> density_eval::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let examples: Vec<EvalExample> = (0..40)
        .map(|i| EvalExample {
            context: vec![format!("turn {i}")],
            answer: "reference".into(),
            system_response: format!("response {i}"),
            human_score: rng.random_range(1.0..5.0),
        })
        .collect();
    // A noisy metric that tracks the human scores.
    let metric: Vec<f64> = examples
        .iter()
        .map(|e| e.human_score + rng.random_range(-1.0..1.0))
        .collect();

    let report = eval::correlate(&metric, &examples)?;
    println!("pearson r = {:.4}, spearman rho = {:.4}, n = {}", report.pearson_r, report.spearman_rho, report.n);

    let human: Vec<f64> = examples.iter().map(|e| e.human_score).collect();
    let sig = eval::correlate_with_significance(&metric, &human, 999, 3)?;
    println!("permutation p: pearson {:?}, spearman {:?}", sig.pearson_p, sig.spearman_p);

    println!("ties get average ranks: {:?}", eval::average_ranks(&[2.0, 1.0, 2.0, 3.0]));
    println!("dialogue-level score of [-1, -2, -3]: {}", eval::dialogue_level(&[-1.0, -2.0, -3.0])?);
    Ok(())
}
