//! Dialogue corpora, context–response pairs and negative candidates.
//!
//! Dialogues are read from JSONL (`{"id", "turns": [{"speaker", "text"}]}` per
//! line). Every turn after the first `min_context` turns becomes the response
//! of one positive pair whose context is the full dialogue prefix.

mod adversarial;
mod synth;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::words;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

pub use adversarial::{make_adversarial, AdversarialKind, ProbeExample, ProbeSet};
pub use synth::synth_corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
}

impl Utterance {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Utterance {
            speaker,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Utterance>,
}

impl Dialogue {
    /// Checks the two-party dialogue invariants: at least two turns, speakers
    /// alternate and every utterance has at least one token.
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidDialogue {
            id: self.id.clone(),
            message,
        };
        if self.turns.len() < 2 {
            return Err(invalid(format!(
                "needs at least 2 turns, found {}",
                self.turns.len()
            )));
        }
        for (i, pair) in self.turns.windows(2).enumerate() {
            if pair[0].speaker == pair[1].speaker {
                return Err(invalid(format!(
                    "speakers do not alternate at turns {} and {}",
                    i,
                    i + 1
                )));
            }
        }
        if let Some(i) = self.turns.iter().position(|u| words(&u.text).is_empty()) {
            return Err(invalid(format!("turn {i} has no tokens")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextResponsePair {
    pub id: String,
    pub dialogue_id: String,
    pub context: Vec<Utterance>,
    pub response: String,
    pub label: Label,
}

impl ContextResponsePair {
    pub fn context_texts(&self) -> Vec<&str> {
        self.context.iter().map(|u| u.text.as_str()).collect()
    }
}

/// One context with its answer and `|C| - 1` sampled negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub pair_id: String,
    pub dialogue_id: String,
    pub context: Vec<Utterance>,
    pub positive: String,
    pub negatives: Vec<String>,
}

impl CandidateSet {
    /// Number of candidates `|C|`, the positive included.
    pub fn len(&self) -> usize {
        1 + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Candidates in canonical order: positive first.
    pub fn candidates(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.positive.as_str()).chain(self.negatives.iter().map(String::as_str))
    }

    pub fn context_texts(&self) -> Vec<&str> {
        self.context.iter().map(|u| u.text.as_str()).collect()
    }
}

/// A human-annotated evaluation example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalExample {
    pub context: Vec<String>,
    pub answer: String,
    pub system_response: String,
    pub human_score: f64,
}

/// A pair to be scored, as exchanged with external feature extractors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringPair {
    pub id: String,
    pub context: Vec<String>,
    pub response: String,
}

impl From<&ContextResponsePair> for ScoringPair {
    fn from(p: &ContextResponsePair) -> Self {
        ScoringPair {
            id: p.id.clone(),
            context: p.context.iter().map(|u| u.text.clone()).collect(),
            response: p.response.clone(),
        }
    }
}

fn read_jsonl<T, F>(path: &Path, mut check: F) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(&T, usize) -> Result<()>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        check(&item, i + 1)?;
        out.push(item);
    }
    if out.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("serializable record");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dialogue JSONL file. Any malformed line or invalid dialogue fails
/// the whole load.
pub fn load_dialogues(path: impl AsRef<Path>) -> Result<Vec<Dialogue>> {
    let mut seen = HashSet::new();
    read_jsonl(path.as_ref(), |d: &Dialogue, _| {
        d.validate()?;
        if !seen.insert(d.id.clone()) {
            return Err(Error::InvalidDialogue {
                id: d.id.clone(),
                message: "duplicate id".into(),
            });
        }
        Ok(())
    })
}

pub fn save_dialogues(path: impl AsRef<Path>, dialogues: &[Dialogue]) -> Result<()> {
    write_jsonl(path.as_ref(), dialogues)
}

pub fn load_eval_dataset(path: impl AsRef<Path>) -> Result<Vec<EvalExample>> {
    let path = path.as_ref();
    read_jsonl(path, |e: &EvalExample, line| {
        if !e.human_score.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "human_score is not finite".into(),
            });
        }
        Ok(())
    })
}

pub fn save_eval_dataset(path: impl AsRef<Path>, examples: &[EvalExample]) -> Result<()> {
    write_jsonl(path.as_ref(), examples)
}

pub fn load_scoring_pairs(path: impl AsRef<Path>) -> Result<Vec<ScoringPair>> {
    read_jsonl(path.as_ref(), |_: &ScoringPair, _| Ok(()))
}

pub fn save_scoring_pairs(path: impl AsRef<Path>, pairs: &[ScoringPair]) -> Result<()> {
    write_jsonl(path.as_ref(), pairs)
}

pub fn load_candidate_sets(path: impl AsRef<Path>) -> Result<Vec<CandidateSet>> {
    read_jsonl(path.as_ref(), |_: &CandidateSet, _| Ok(()))
}

pub fn save_candidate_sets(path: impl AsRef<Path>, sets: &[CandidateSet]) -> Result<()> {
    write_jsonl(path.as_ref(), sets)
}

/// Emits one positive pair per turn index `t >= min_context`, with the full
/// prefix `turns[..t]` as context.
pub fn build_pairs(dialogues: &[Dialogue], min_context: usize) -> Result<Vec<ContextResponsePair>> {
    if min_context < 1 {
        return Err(Error::InvalidInput("min_context must be at least 1".into()));
    }
    let mut pairs = Vec::new();
    for d in dialogues {
        for t in min_context..d.turns.len() {
            pairs.push(ContextResponsePair {
                id: format!("{}#{}", d.id, t),
                dialogue_id: d.id.clone(),
                context: d.turns[..t].to_vec(),
                response: d.turns[t].text.clone(),
                label: Label::Positive,
            });
        }
    }
    Ok(pairs)
}

/// Distinct response texts with the dialogues each one occurs in.
struct ResponsePool<'a> {
    texts: Vec<&'a str>,
    owners: Vec<Vec<&'a str>>,
}

impl<'a> ResponsePool<'a> {
    fn new(pairs: &'a [ContextResponsePair]) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut texts = Vec::new();
        let mut owners: Vec<Vec<&str>> = Vec::new();
        for p in pairs {
            let slot = *index.entry(p.response.as_str()).or_insert_with(|| {
                texts.push(p.response.as_str());
                owners.push(Vec::new());
                texts.len() - 1
            });
            if !owners[slot].contains(&p.dialogue_id.as_str()) {
                owners[slot].push(p.dialogue_id.as_str());
            }
        }
        ResponsePool { texts, owners }
    }

    fn eligible(&self, i: usize, pair: &ContextResponsePair) -> bool {
        self.texts[i] != pair.response && !self.owners[i].contains(&pair.dialogue_id.as_str())
    }
}

/// Samples `k` negatives per pair from the responses of the pairs themselves.
pub fn sample_negatives(
    pairs: &[ContextResponsePair],
    k: usize,
    seed: u64,
) -> Result<Vec<CandidateSet>> {
    sample_negatives_from(pairs, pairs, k, seed)
}

/// Samples, for each pair, `k` distinct responses uniformly without
/// replacement from the distinct responses of `pool` that do not occur in the
/// pair's own dialogue and differ from its positive.
pub fn sample_negatives_from(
    pairs: &[ContextResponsePair],
    pool: &[ContextResponsePair],
    k: usize,
    seed: u64,
) -> Result<Vec<CandidateSet>> {
    let pool = ResponsePool::new(pool);
    if pool.texts.len() <= k {
        return Err(Error::InvalidInput(format!(
            "response pool has {} distinct responses, need more than {k}",
            pool.texts.len()
        )));
    }
    let mut rng = seed::rng(seed, Stream::Negatives, 0);
    let n = pool.texts.len();
    let mut sets = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        let mut attempts = 0usize;
        while chosen.len() < k && attempts < 64 * (k + 1) {
            attempts += 1;
            let i = rng.random_range(0..n);
            if pool.eligible(i, pair) && !chosen.contains(&i) {
                chosen.push(i);
            }
        }
        if chosen.len() < k {
            // Rejection sampling stalled: fall back to drawing from the
            // explicit eligible list.
            let mut rest: Vec<usize> = (0..n)
                .filter(|&i| pool.eligible(i, pair) && !chosen.contains(&i))
                .collect();
            if chosen.len() + rest.len() < k {
                return Err(Error::InvalidInput(format!(
                    "pair {}: only {} eligible negatives, need {k}",
                    pair.id,
                    chosen.len() + rest.len()
                )));
            }
            while chosen.len() < k {
                let j = rng.random_range(0..rest.len());
                chosen.push(rest.swap_remove(j));
            }
        }
        sets.push(CandidateSet {
            pair_id: pair.id.clone(),
            dialogue_id: pair.dialogue_id.clone(),
            context: pair.context.clone(),
            positive: pair.response.clone(),
            negatives: chosen.into_iter().map(|i| pool.texts[i].to_string()).collect(),
        });
    }
    Ok(sets)
}

/// Deterministic shuffle-based split of dialogues into (train, validation).
/// At least one dialogue lands on each side when there are two or more.
pub fn split_dialogues(
    dialogues: &[Dialogue],
    val_fraction: f64,
    seed: u64,
) -> (Vec<Dialogue>, Vec<Dialogue>) {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..dialogues.len()).collect();
    order.shuffle(&mut seed::rng(seed, Stream::Split, 0));
    let mut n_val = (dialogues.len() as f64 * val_fraction).round() as usize;
    if dialogues.len() >= 2 {
        n_val = n_val.clamp(1, dialogues.len() - 1);
    } else {
        n_val = 0;
    }
    let mut val_idx: Vec<usize> = order[..n_val].to_vec();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    (
        train_idx.iter().map(|&i| dialogues[i].clone()).collect(),
        val_idx.iter().map(|&i| dialogues[i].clone()).collect(),
    )
}
