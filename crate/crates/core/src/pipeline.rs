//! Glue from a dialogue corpus to a ready-to-use density scorer.

use crate::corpus::{self, ContextResponsePair, Dialogue, ProbeSet};
use crate::density::{self, DensityScorer, GaussianModel, ResponseScorer, ScoreFunction};
use crate::encoder::{Encoder, EncoderParams, FeatureMatrix};
use crate::error::Result;
use crate::eval::{self, ProbeReport};
use crate::training::{self, Hyperparams, Prepared, TrainOutcome};

/// Features of every pair under `encoder`, in pair order.
pub fn encode_pairs(encoder: &Encoder, pairs: &[ContextResponsePair]) -> Result<FeatureMatrix> {
    let items: Vec<(Vec<&str>, &str)> = pairs
        .iter()
        .map(|p| (p.context_texts(), p.response.as_str()))
        .collect();
    Ok(encoder.encode_many(&items)?.0)
}

/// Fits the Gaussian over the features of positive `pairs`.
pub fn fit_on_pairs(encoder: &Encoder, pairs: &[ContextResponsePair]) -> Result<GaussianModel> {
    density::fit(&encode_pairs(encoder, pairs)?)
}

/// Result of training and fitting on one corpus.
#[derive(Debug, Clone)]
pub struct Trained {
    pub prepared: Prepared,
    pub outcome: TrainOutcome,
    pub scorer: DensityScorer,
}

impl Trained {
    pub fn encoder(&self) -> &Encoder {
        &self.scorer.encoder
    }
}

/// Trains the selection model, then fits the Gaussian on the training
/// split's positive pairs.
pub fn train_and_fit(dialogues: &[Dialogue], hyper: &Hyperparams) -> Result<Trained> {
    let (prepared, outcome) = training::train(dialogues, hyper)?;
    let scorer = scorer_for(&prepared, outcome.params.clone(), hyper)?;
    Ok(Trained {
        prepared,
        outcome,
        scorer,
    })
}

pub fn scorer_for(prepared: &Prepared, params: EncoderParams, hyper: &Hyperparams) -> Result<DensityScorer> {
    let encoder = Encoder::new(prepared.vocab.clone(), params, hyper.max_tokens)?;
    let model = fit_on_pairs(&encoder, &prepared.train_pairs)?;
    DensityScorer::new(encoder, model, ScoreFunction::MahalanobisSqrt)
}

/// Answer and random-response scores on held-out pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    pub answer_scores: Vec<f64>,
    pub random_scores: Vec<f64>,
    pub auc: f64,
}

/// Scores each held-out answer and one random response from another
/// dialogue for the same context.
pub fn separation(
    scorer: &impl ResponseScorer,
    pairs: &[ContextResponsePair],
    pool: &[ContextResponsePair],
    seed: u64,
) -> Result<Separation> {
    let sets = corpus::sample_negatives_from(pairs, pool, 1, seed)?;
    let mut answers = Vec::with_capacity(sets.len());
    let mut randoms = Vec::with_capacity(sets.len());
    for s in &sets {
        let ctx = s.context_texts();
        answers.push((ctx.clone(), s.positive.as_str()));
        randoms.push((ctx, s.negatives[0].as_str()));
    }
    let answer_scores = scorer.score_batch(&answers)?;
    let random_scores = scorer.score_batch(&randoms)?;
    let auc = eval::auc(&answer_scores, &random_scores)?;
    Ok(Separation {
        answer_scores,
        random_scores,
        auc,
    })
}

/// Probe accuracy of the density scorer and of the classifier head on
/// probes built from `pairs`.
pub fn probe_both(
    scorer: &DensityScorer,
    pairs: &[ContextResponsePair],
    pool: &[ContextResponsePair],
    seed: u64,
) -> Result<(ProbeReport, ProbeReport)> {
    let probes = ProbeSet::build(pairs, pool, seed)?;
    let density = eval::probe_accuracy(&probes.examples, scorer)?;
    let classifier = eval::probe_accuracy(&probes.examples, &scorer.with_function(ScoreFunction::Classifier))?;
    Ok((density, classifier))
}
