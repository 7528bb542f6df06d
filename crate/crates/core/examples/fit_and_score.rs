//! Fits the Gaussian over training features and scores held-out answers
//! against random responses with every score function.
//!
//! cargo run --release --example fit_and_score

use density_eval::corpus::{self, synth_corpus};
use density_eval::density::{ResponseScorer, ScoreFunction};
use density_eval::pipeline;
use density_eval::training::Hyperparams;

fn main() -> density_eval::Result<()> {
    let dialogues = synth_corpus(1000, 2);
    let hyper = Hyperparams {
        learning_rate: 3e-2,
        epochs: 30,
        dim: 32,
        warmup_steps: 500,
        seed: 2,
        ..Hyperparams::default()
    };
    let trained = pipeline::train_and_fit(&dialogues, &hyper)?;
    let model = &trained.scorer.model;
    println!(
        "fitted on {} pairs, d = {}, largest/smallest singular value {:.3e} / {:.3e}",
        model.n_fitted,
        model.dim(),
        model.singular_values[0],
        model.singular_values[model.dim() - 1]
    );

    let pool = corpus::build_pairs(&dialogues, 1)?;
    for f in ScoreFunction::ALL {
        let scorer = trained.scorer.with_function(f);
        let sep = pipeline::separation(&scorer, &trained.prepared.val_pairs, &pool, 9)?;
        println!("{f:>20}: answer vs random AUC {:.3}", sep.auc);
    }

    let pair = &trained.prepared.val_pairs[0];
    let ctx = pair.context_texts();
    println!("context: {:?}", ctx);
    for r in [pair.response.as_str(), "i would like a ticket to the airport please ."] {
        println!("{:>8.3}  {r}", trained.scorer.score(&ctx, r)?);
    }
    Ok(())
}
