//! Generates a synthetic corpus, derives context-response pairs and samples
//! negative candidates, then writes both as JSONL.
//!
//! cargo run --example synthetic_corpus -- [out_dir]

use density_eval::corpus::{self, synth_corpus};

fn main() -> density_eval::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("density-eval-corpus"));
    std::fs::create_dir_all(&out).expect("create output dir");

    let dialogues = synth_corpus(200, 7);
    for turn in &dialogues[0].turns {
        println!("{:?}: {}", turn.speaker, turn.text);
    }

    let pairs = corpus::build_pairs(&dialogues, 1)?;
    let sets = corpus::sample_negatives(&pairs, 15, 7)?;
    println!("{} dialogues -> {} pairs -> {} candidate sets of {}", dialogues.len(), pairs.len(), sets.len(), sets[0].len());

    let (train, val) = corpus::split_dialogues(&dialogues, 0.1, 7);
    println!("split: {} train / {} validation dialogues", train.len(), val.len());

    corpus::save_dialogues(out.join("dialogues.jsonl"), &dialogues)?;
    corpus::save_candidate_sets(out.join("candidates.jsonl"), &sets)?;
    println!("wrote {}", out.display());
    Ok(())
}
