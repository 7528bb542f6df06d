//! Trains the reference encoder with the selection and contrastive losses
//! and saves the best checkpoint.
//!
//! cargo run --release --example train_encoder

use density_eval::corpus::synth_corpus;
use density_eval::encoder::checkpoint;
use density_eval::training::{self, Hyperparams};

fn main() -> density_eval::Result<()> {
    let dialogues = synth_corpus(1000, 1);
    let hyper = Hyperparams {
        learning_rate: 3e-2,
        epochs: 30,
        dim: 32,
        warmup_steps: 500,
        seed: 1,
        ..Hyperparams::default()
    };
    let (prepared, outcome) = training::train(&dialogues, &hyper)?;
    println!("vocab {} tokens, {} train pairs", prepared.vocab.len(), prepared.train_pairs.len());
    for l in &outcome.log {
        println!(
            "epoch {:2}  loss {:.4}  R@1 {:.3}  MRR {:.3}",
            l.epoch, l.train_loss, l.val_recall_at_1, l.val_mrr
        );
    }
    println!("best epoch: {:?}", outcome.best_epoch);

    let path = std::env::temp_dir().join("density-eval-example.densp");
    checkpoint::save_checkpoint(&path, &outcome.params)?;
    let back = checkpoint::load_checkpoint(&path)?;
    assert_eq!(back, outcome.params);
    println!("checkpoint: {}", path.display());
    Ok(())
}
