//! Recall@1 and MRR over candidate sets, for hand-written scores and for a
//! trained scorer.
//!
//! cargo run --release --example selection_metrics

use density_eval::corpus::synth_corpus;
use density_eval::density::ScoreFunction;
use density_eval::eval;
use density_eval::pipeline;
use density_eval::training::Hyperparams;

fn main() -> density_eval::Result<()> {
    // Positive first in each row; ties count against the positive.
    let scores = vec![vec![0.9, 0.1, 0.2], vec![0.5, 0.5, 0.1], vec![0.1, 0.3, 0.2]];
    let r = eval::selection_from_scores(&scores, &[0, 0, 0])?;
    println!("hand scores: R@1 {:.3}  MRR {:.3}", r.recall_at_1, r.mrr);

    let dialogues = synth_corpus(1000, 5);
    let hyper = Hyperparams {
        learning_rate: 3e-2,
        epochs: 30,
        dim: 32,
        warmup_steps: 500,
        seed: 5,
        ..Hyperparams::default()
    };
    let trained = pipeline::train_and_fit(&dialogues, &hyper)?;
    let sets = &trained.prepared.val_sets;
    for f in [ScoreFunction::Classifier, ScoreFunction::MahalanobisSqrt] {
        let r = eval::selection_metrics(sets, &trained.scorer.with_function(f))?;
        println!("{f:>17}: R@1 {:.3}  MRR {:.3}  over {} sets of {}", r.recall_at_1, r.mrr, r.n, sets[0].len());
    }
    Ok(())
}
