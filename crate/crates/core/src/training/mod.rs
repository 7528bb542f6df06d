//! Training of the selection model.
//!
//! The objective for a batch of `|B|` candidate sets, each holding one answer
//! and `|C| - 1` random negatives, is
//!
//! ```text
//! L = mean_i L_RS(i) + lambda * L_CL / |B|
//! ```
//!
//! where `L_RS` is the softmax cross-entropy of the answer among its
//! candidates and `L_CL` the supervised contrastive loss that treats every
//! answer pair in the batch as one class. After every epoch the model is
//! scored by recall@1 on held-out dialogues and the best epoch is kept.

mod loss;
mod optim;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CandidateSet, ContextResponsePair, Dialogue};
use crate::encoder::{normalize, normalize_backward, vjp_cached, EncoderParams, TokenSeq, Vocab};
use crate::error::{Error, Result};
use crate::eval::{selection_from_scores, SelectionReport};
use crate::seed::{self, Stream};

pub use loss::{loss_cl, loss_cl_grad, loss_rs, loss_rs_grad};
pub use optim::{lr_schedule, AdamW, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Contrastive temperature.
    pub tau: f64,
    /// Weight of the contrastive term.
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Candidate sets per batch, `|B|`.
    pub batch_size: usize,
    /// Candidates per context including the answer, `|C|`.
    pub candidate_count: usize,
    pub warmup_steps: u64,
    pub max_tokens: usize,
    pub seed: u64,
    /// Feature dimension of the reference encoder.
    pub dim: usize,
    pub weight_decay: f64,
    pub val_fraction: f64,
    pub min_context: usize,
    /// Draw fresh negatives every epoch instead of once per run.
    pub resample_negatives: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            tau: 0.1,
            lambda: 1.0,
            learning_rate: 5e-5,
            epochs: 10,
            batch_size: 16,
            candidate_count: 16,
            warmup_steps: 1000,
            max_tokens: 256,
            seed: 0,
            dim: 64,
            weight_decay: 0.01,
            val_fraction: 0.1,
            min_context: 1,
            resample_negatives: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be non-negative");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.candidate_count < 2 {
            return bad("candidate_count must be at least 2");
        }
        if self.dim == 0 || self.max_tokens < 2 {
            return bad("dim and max_tokens must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        if self.min_context < 1 {
            return bad("min_context must be at least 1");
        }
        Ok(())
    }
}

/// One candidate set as token sequences, answer first.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub candidates: Vec<TokenSeq>,
}

impl EncodedSet {
    pub fn from_set(set: &CandidateSet, vocab: &Vocab, max_tokens: usize) -> Self {
        let ctx = set.context_texts();
        EncodedSet {
            candidates: set
                .candidates()
                .map(|r| vocab.pair_tokens(ctx.iter().copied(), r, max_tokens))
                .collect(),
        }
    }
}

/// Batch quantities the objective is computed from: per-set logits (answer
/// at `positive[i]`) and one normalized feature per pair, set-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub logits: Vec<Vec<f64>>,
    pub positive: Vec<usize>,
    pub z: Vec<Vec<f64>>,
}

impl Batch {
    /// Row index of each answer in `z`.
    pub fn positive_rows(&self) -> Vec<usize> {
        let mut offset = 0;
        self.logits
            .iter()
            .zip(&self.positive)
            .map(|(l, p)| {
                let row = offset + p;
                offset += l.len();
                row
            })
            .collect()
    }
}

/// `mean_i loss_rs(i) + lambda * loss_cl / |B|`.
pub fn total_loss(batch: &Batch, hyper: &Hyperparams) -> Result<f64> {
    let b = batch.logits.len();
    if b == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let mut rs = 0.0;
    for (l, &p) in batch.logits.iter().zip(&batch.positive) {
        rs += loss_rs(l, p)?;
    }
    let mut total = rs / b as f64;
    if hyper.lambda != 0.0 {
        total += hyper.lambda * loss_cl(&batch.z, &batch.positive_rows(), hyper.tau)? / b as f64;
    }
    Ok(total)
}

/// Runs the encoder over `sets` and assembles the [`Batch`]. The answer is
/// the first candidate of each set.
pub fn forward_batch(params: &EncoderParams, sets: &[EncodedSet]) -> Result<Batch> {
    let seqs: Vec<TokenSeq> = sets.iter().flat_map(|s| s.candidates.iter().cloned()).collect();
    let fwd = params.forward_batch(&seqs)?;
    Ok(assemble(sets, &fwd))
}

fn assemble(sets: &[EncodedSet], fwd: &[crate::encoder::Forward]) -> Batch {
    let mut logits = Vec::with_capacity(sets.len());
    let mut k = 0;
    for s in sets {
        logits.push(fwd[k..k + s.candidates.len()].iter().map(|f| f.logit).collect());
        k += s.candidates.len();
    }
    Batch {
        logits,
        positive: vec![0; sets.len()],
        z: fwd.iter().map(|f| normalize(&f.h)).collect(),
    }
}

/// Objective value and its gradient with respect to every parameter.
pub fn loss_and_grad(params: &EncoderParams, sets: &[EncodedSet], hyper: &Hyperparams) -> Result<(f64, EncoderParams)> {
    let seqs: Vec<TokenSeq> = sets.iter().flat_map(|s| s.candidates.iter().cloned()).collect();
    let fwd = params.forward_batch(&seqs)?;
    let batch = assemble(sets, &fwd);
    let b = sets.len() as f64;

    let mut loss = 0.0;
    let mut d_logit = Vec::with_capacity(fwd.len());
    for (l, &p) in batch.logits.iter().zip(&batch.positive) {
        let (v, g) = loss_rs_grad(l, p)?;
        loss += v / b;
        d_logit.extend(g.into_iter().map(|x| x / b));
    }
    let d = params.dim;
    let mut d_z = vec![vec![0.0; d]; fwd.len()];
    if hyper.lambda != 0.0 {
        let (v, g) = loss_cl_grad(&batch.z, &batch.positive_rows(), hyper.tau)?;
        loss += hyper.lambda * v / b;
        let scale = hyper.lambda / b;
        for (dst, src) in d_z.iter_mut().zip(g) {
            for (a, s) in dst.iter_mut().zip(src) {
                *a = scale * s;
            }
        }
    }

    let mut d_head = vec![0.0; d];
    let upstream: Vec<Vec<f64>> = fwd
        .iter()
        .zip(&batch.z)
        .zip(d_logit.iter().zip(&d_z))
        .map(|((f, z), (&dl, dz))| {
            for (g, hi) in d_head.iter_mut().zip(&f.h) {
                *g += dl * hi;
            }
            let mut dh = normalize_backward(&f.h, z, dz);
            for (g, w) in dh.iter_mut().zip(&params.head) {
                *g += dl * w;
            }
            dh
        })
        .collect();
    let mut grads = vjp_cached(params, &fwd, &upstream)?;
    grads.head = d_head;
    Ok((loss, grads))
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_recall_at_1: f64,
    pub val_mrr: f64,
    pub lr_last: f64,
}

/// Corpus split and derived pairs, fixed for one training run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocab: Vocab,
    pub train_dialogues: Vec<Dialogue>,
    pub val_dialogues: Vec<Dialogue>,
    pub train_pairs: Vec<ContextResponsePair>,
    pub val_pairs: Vec<ContextResponsePair>,
    /// Validation candidate sets; negatives come from the whole corpus.
    pub val_sets: Vec<CandidateSet>,
}

pub fn prepare(dialogues: &[Dialogue], hyper: &Hyperparams) -> Result<Prepared> {
    hyper.validate()?;
    let vocab = Vocab::build(dialogues.iter().flat_map(|d| d.turns.iter().map(|u| u.text.as_str())));
    let (train_dialogues, val_dialogues) = corpus::split_dialogues(dialogues, hyper.val_fraction, hyper.seed);
    let train_pairs = corpus::build_pairs(&train_dialogues, hyper.min_context)?;
    let val_pairs = corpus::build_pairs(&val_dialogues, hyper.min_context)?;
    let all_pairs = corpus::build_pairs(dialogues, hyper.min_context)?;
    let val_seed = seed_for(hyper.seed, Stream::ValNegatives, 0);
    let val_sets = if val_pairs.is_empty() {
        Vec::new()
    } else {
        corpus::sample_negatives_from(&val_pairs, &all_pairs, hyper.candidate_count - 1, val_seed)?
    };
    Ok(Prepared {
        vocab,
        train_dialogues,
        val_dialogues,
        train_pairs,
        val_pairs,
        val_sets,
    })
}

fn seed_for(seed: u64, stream: Stream, sub: u64) -> u64 {
    use rand::RngCore;
    seed::rng(seed, stream, sub).next_u64()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation recall@1 (the
    /// initial parameters when no epoch ran).
    pub params: EncoderParams,
    pub best_epoch: Option<usize>,
    pub log: Vec<EpochLog>,
}

/// Selection metrics of the classifier head on encoded candidate sets.
pub fn evaluate_selection(params: &EncoderParams, sets: &[EncodedSet]) -> Result<SelectionReport> {
    let batch = forward_batch(params, sets)?;
    selection_from_scores(&batch.logits, &batch.positive)
}

/// Number of optimizer steps per epoch for `n_sets` candidate sets. A final
/// partial batch is kept when it holds at least two sets.
fn batches_per_epoch(n_sets: usize, batch_size: usize) -> usize {
    let full = n_sets / batch_size;
    full + usize::from(n_sets % batch_size >= 2)
}

pub fn train(dialogues: &[Dialogue], hyper: &Hyperparams) -> Result<(Prepared, TrainOutcome)> {
    let prep = prepare(dialogues, hyper)?;
    let outcome = train_prepared(&prep, hyper)?;
    Ok((prep, outcome))
}

pub fn train_prepared(prep: &Prepared, hyper: &Hyperparams) -> Result<TrainOutcome> {
    hyper.validate()?;
    let mut params = EncoderParams::init(prep.vocab.len(), hyper.dim, seed_for(hyper.seed, Stream::Init, 0))?;
    if hyper.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            best_epoch: None,
            log: Vec::new(),
        });
    }
    let k = hyper.candidate_count - 1;
    let encode_sets = |sets: &[CandidateSet]| -> Vec<EncodedSet> {
        sets.iter()
            .map(|s| EncodedSet::from_set(s, &prep.vocab, hyper.max_tokens))
            .collect()
    };
    let val_sets = encode_sets(&prep.val_sets);

    let mut train_sets = encode_sets(&corpus::sample_negatives(
        &prep.train_pairs,
        k,
        seed_for(hyper.seed, Stream::Negatives, 0),
    )?);
    let steps_per_epoch = batches_per_epoch(train_sets.len(), hyper.batch_size);
    if steps_per_epoch == 0 {
        return Err(Error::InvalidInput(format!(
            "{} training pairs do not fill a batch",
            train_sets.len()
        )));
    }
    let total_steps = (steps_per_epoch * hyper.epochs) as u64;
    let warmup = if hyper.warmup_steps >= total_steps {
        total_steps / 10
    } else {
        hyper.warmup_steps
    };

    let mut opt = AdamW::new(hyper.weight_decay);
    let mut log = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(f64, usize, EncoderParams)> = None;
    let mut global_step = 0u64;
    for epoch in 0..hyper.epochs {
        if hyper.resample_negatives && epoch > 0 {
            train_sets = encode_sets(&corpus::sample_negatives(
                &prep.train_pairs,
                k,
                seed_for(hyper.seed, Stream::Negatives, epoch as u64),
            )?);
        }
        let mut order: Vec<usize> = (0..train_sets.len()).collect();
        order.shuffle(&mut seed::rng(hyper.seed, Stream::Shuffle, epoch as u64));

        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for (step, chunk) in order.chunks(hyper.batch_size).take(steps_per_epoch).enumerate() {
            let batch: Vec<EncodedSet> = chunk.iter().map(|&i| train_sets[i].clone()).collect();
            let (loss, grads) = loss_and_grad(&params, &batch, hyper).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged { epoch, step, loss: f64::NAN },
                e => e,
            })?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step, loss });
            }
            lr = lr_schedule(global_step, warmup, total_steps, hyper.learning_rate);
            let grad_refs = grads.tensors();
            let mut param_refs = params.tensors_mut();
            opt.step(&mut param_refs, &grad_refs, lr).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged { epoch, step, loss },
                e => e,
            })?;
            loss_sum += loss;
            global_step += 1;
        }

        let val = if val_sets.is_empty() {
            SelectionReport::default()
        } else {
            evaluate_selection(&params, &val_sets).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged { epoch, step: steps_per_epoch, loss: f64::NAN },
                e => e,
            })?
        };
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / steps_per_epoch as f64,
            val_recall_at_1: val.recall_at_1,
            val_mrr: val.mrr,
            lr_last: lr,
        });
        if best.as_ref().is_none_or(|(r, _, _)| val.recall_at_1 > *r) {
            best = Some((val.recall_at_1, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        best_epoch: Some(best_epoch),
        log,
    })
}

pub fn write_log(path: impl AsRef<std::path::Path>, log: &[EpochLog]) -> Result<()> {
    corpus::write_jsonl(path.as_ref(), log)
}
