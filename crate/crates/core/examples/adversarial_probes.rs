//! Builds repetition, speaker-sensitive, contradiction and random probes and
//! compares the density scorer with the classifier head.
//!
//! cargo run --release --example adversarial_probes

use density_eval::corpus::{self, make_adversarial, synth_corpus, AdversarialKind};
use density_eval::pipeline;
use density_eval::training::Hyperparams;

fn main() -> density_eval::Result<()> {
    let ctx = ["is the train on time ?"];
    let pool = ["the soup is cold .", "my friend told me the goal was great ."];
    for kind in AdversarialKind::ALL {
        let adv = make_adversarial("it is fine", &ctx, kind, &pool, 4)?;
        println!("{kind:>17}: {adv}");
    }

    let dialogues = synth_corpus(1000, 4);
    let hyper = Hyperparams {
        learning_rate: 3e-2,
        epochs: 30,
        dim: 32,
        warmup_steps: 500,
        seed: 4,
        ..Hyperparams::default()
    };
    let trained = pipeline::train_and_fit(&dialogues, &hyper)?;
    let all = corpus::build_pairs(&dialogues, 1)?;
    let (density, classifier) = pipeline::probe_both(&trained.scorer, &trained.prepared.val_pairs, &all, 4)?;
    println!("{:>17}  density  classifier", "kind");
    for kind in AdversarialKind::ALL {
        println!(
            "{kind:>17}  {:7.3}  {:10.3}",
            density.accuracy(kind).unwrap_or(f64::NAN),
            classifier.accuracy(kind).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
