//! Adversarial probe responses.
//!
//! Structural analogues of common dialogue-system failures, each derived
//! from a gold answer. A good metric should rank the answer above every one of
//! them.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ContextResponsePair;
use crate::encoder::words;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialKind {
    /// The answer repeated twice.
    Repetition,
    /// Last context utterance glued in front of the answer.
    SpeakerSensitive,
    /// The answer with its polarity flipped.
    Contradiction,
    /// An unrelated response from the corpus.
    Random,
}

impl AdversarialKind {
    pub const ALL: [AdversarialKind; 4] = [
        AdversarialKind::Repetition,
        AdversarialKind::SpeakerSensitive,
        AdversarialKind::Contradiction,
        AdversarialKind::Random,
    ];
}

impl fmt::Display for AdversarialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AdversarialKind::Repetition => "repetition",
            AdversarialKind::SpeakerSensitive => "speaker_sensitive",
            AdversarialKind::Contradiction => "contradiction",
            AdversarialKind::Random => "random",
        };
        f.pad(s)
    }
}

const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "do", "does", "did", "can", "could", "will",
    "would", "should", "shall", "may", "might", "must", "have", "has", "had",
];

const NEGATIONS: &[&str] = &["not", "never"];

fn bare(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Flips the polarity of `answer`: drops a negation that directly follows the
/// first auxiliary, otherwise inserts "not" after it. Answers without an
/// auxiliary get a negating prefix.
fn contradict(answer: &str) -> String {
    let mut tokens: Vec<&str> = answer.split_whitespace().collect();
    if let Some(i) = tokens.iter().position(|w| AUXILIARIES.contains(&bare(w).as_str())) {
        // Punctuation glued to the auxiliary ("is," / "is?") stays on the
        // auxiliary side.
        if tokens
            .get(i + 1)
            .is_some_and(|w| NEGATIONS.contains(&bare(w).as_str()))
        {
            tokens.remove(i + 1);
        } else {
            tokens.insert(i + 1, "not");
        }
        tokens.join(" ")
    } else {
        format!("it is not true that {answer}")
    }
}

/// Builds an adversarial variant of `answer`.
///
/// `pool` supplies the responses for [`AdversarialKind::Random`]; the draw is
/// a function of `seed` and never returns the answer itself.
pub fn make_adversarial(
    answer: &str,
    context: &[&str],
    kind: AdversarialKind,
    pool: &[&str],
    seed: u64,
) -> Result<String> {
    if words(answer).is_empty() {
        return Err(Error::InvalidInput("answer is empty".into()));
    }
    match kind {
        AdversarialKind::Repetition => Ok(format!("{answer} {answer}")),
        AdversarialKind::SpeakerSensitive => {
            let last = context
                .last()
                .ok_or_else(|| Error::InvalidInput("speaker-sensitive probe needs a context".into()))?;
            Ok(format!("{last} {answer}"))
        }
        AdversarialKind::Contradiction => Ok(contradict(answer)),
        AdversarialKind::Random => {
            let eligible: Vec<&str> = pool.iter().copied().filter(|r| *r != answer).collect();
            if eligible.is_empty() {
                return Err(Error::InvalidInput("random probe needs a non-trivial pool".into()));
            }
            let mut rng = seed::rng(seed, Stream::Adversarial, 0);
            Ok(eligible[rng.random_range(0..eligible.len())].to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeExample {
    pub context: Vec<String>,
    pub answer: String,
    pub adversarial: String,
    pub kind: AdversarialKind,
}

/// Probe examples for every pair and every kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub examples: Vec<ProbeExample>,
}

impl ProbeSet {
    /// Builds one probe of each kind per pair. Random responses are drawn
    /// from `pool` excluding the pair's own dialogue.
    pub fn build(pairs: &[ContextResponsePair], pool: &[ContextResponsePair], seed: u64) -> Result<Self> {
        let mut examples = Vec::with_capacity(4 * pairs.len());
        for (i, pair) in pairs.iter().enumerate() {
            let context = pair.context_texts();
            let others: Vec<&str> = pool
                .iter()
                .filter(|p| p.dialogue_id != pair.dialogue_id)
                .map(|p| p.response.as_str())
                .collect();
            for kind in AdversarialKind::ALL {
                let sub_seed = seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let adversarial = make_adversarial(&pair.response, &context, kind, &others, sub_seed)?;
                examples.push(ProbeExample {
                    context: context.iter().map(|s| s.to_string()).collect(),
                    answer: pair.response.clone(),
                    adversarial,
                    kind,
                });
            }
        }
        Ok(ProbeSet { examples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repetition_duplicates_answer() {
        let out = make_adversarial("beef, please.", &[], AdversarialKind::Repetition, &[], 0).unwrap();
        assert_eq!(out, "beef, please. beef, please.");
        assert_eq!(words(&out).len(), 2 * words("beef, please.").len());
    }

    #[test]
    fn speaker_sensitive_prefixes_last_utterance() {
        let ctx = ["hello there", "what would you like?"];
        let out = make_adversarial("beef, please.", &ctx, AdversarialKind::SpeakerSensitive, &[], 0).unwrap();
        assert_eq!(out, "what would you like? beef, please.");
        assert!(make_adversarial("x", &[], AdversarialKind::SpeakerSensitive, &[], 0).is_err());
    }

    #[test]
    fn contradiction_inserts_negation() {
        let f = |s| make_adversarial(s, &[], AdversarialKind::Contradiction, &[], 0).unwrap();
        assert_eq!(f("it is fine"), "it is not fine");
        assert_eq!(f("I can not swim."), "I can swim.");
        assert_eq!(f("sounds good"), "it is not true that sounds good");
    }

    #[test]
    fn random_is_seeded_and_never_the_answer() {
        let pool = ["a", "b", "c", "answer"];
        let x = make_adversarial("answer", &[], AdversarialKind::Random, &pool, 5).unwrap();
        let y = make_adversarial("answer", &[], AdversarialKind::Random, &pool, 5).unwrap();
        assert_eq!(x, y);
        assert_ne!(x, "answer");
        assert!(make_adversarial("answer", &[], AdversarialKind::Random, &["answer"], 5).is_err());
    }

    #[test]
    fn empty_answer_rejected() {
        for kind in AdversarialKind::ALL {
            assert!(make_adversarial("  ", &["c"], kind, &["p"], 0).is_err());
        }
    }
}
