//! Pair encoder `h = g(c, r)` and classifier head `f(c, r) = W·h`.
//!
//! The reference encoder mean-pools token embeddings of
//! `context [SEP] response` and passes the result through a two-layer
//! perceptron:
//!
//! ```text
//! x = mean(E[t] for t in tokens)
//! u = tanh(W1·x + b1)
//! h = W2·u + b2
//! f = W·h
//! ```
//!
//! It is small enough that every gradient can be checked against finite
//! differences. Features from a pretrained encoder enter through
//! [`features`] instead.

pub mod checkpoint;
pub mod features;
mod vocab;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed::{self, Stream};

pub use features::{FeatureMatrix, Provenance};
pub use vocab::{words, TokenSeq, Vocab, CLASSIFY, SEPARATOR, UNKNOWN};

/// Pairs per chunk in the gradient reduction. Chunk partial sums are combined
/// in chunk order, so results do not depend on the thread count.
const GRAD_CHUNK: usize = 16;

const NORM_EPS: f64 = 1e-12;

/// All trainable tensors, row-major. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub vocab_size: usize,
    pub dim: usize,
    /// `V x d` token embeddings.
    pub embedding: Vec<f64>,
    /// `d x d`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `d x d`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Classifier head, `1 x d`.
    pub head: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        EncoderParams {
            vocab_size,
            dim,
            embedding: vec![0.0; vocab_size * dim],
            w1: vec![0.0; dim * dim],
            b1: vec![0.0; dim],
            w2: vec![0.0; dim * dim],
            b2: vec![0.0; dim],
            head: vec![0.0; dim],
        }
    }

    /// Weights uniform in `[-1/sqrt(d), 1/sqrt(d)]`, biases zero.
    pub fn init(vocab_size: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || vocab_size == 0 {
            return Err(Error::InvalidInput("encoder dimensions must be positive".into()));
        }
        let mut p = Self::zeros(vocab_size, dim);
        let bound = 1.0 / (dim as f64).sqrt();
        let mut rng = seed::rng(seed, Stream::Init, 0);
        for t in [&mut p.embedding, &mut p.w1, &mut p.w2, &mut p.head] {
            for v in t.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size, self.dim)
    }

    /// Tensors in declared field order.
    pub fn tensors(&self) -> [&[f64]; 6] {
        [&self.embedding, &self.w1, &self.b1, &self.w2, &self.b2, &self.head]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.embedding,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.head,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let (v, d) = (self.vocab_size, self.dim);
        if d == 0 {
            return Err(Error::InvalidInput("encoder dimension must be positive".into()));
        }
        let expected = [v * d, d * d, d, d * d, d, d];
        for (t, e) in self.tensors().iter().zip(expected) {
            if t.len() != e {
                return Err(Error::DimensionMismatch {
                    expected: e,
                    actual: t.len(),
                });
            }
        }
        for (name, t) in ["embedding", "w1", "b1", "w2", "b2", "head"].iter().zip(self.tensors()) {
            if let Some(i) = t.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: (*name).into(),
                    index: i,
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, tokens: &[u32]) -> Result<Forward> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("cannot encode an empty token sequence".into()));
        }
        let d = self.dim;
        let mut x = vec![0.0; d];
        for &t in tokens {
            let t = t as usize;
            if t >= self.vocab_size {
                return Err(Error::InvalidInput(format!(
                    "token index {t} outside vocabulary of {}",
                    self.vocab_size
                )));
            }
            for (xi, e) in x.iter_mut().zip(&self.embedding[t * d..(t + 1) * d]) {
                *xi += e;
            }
        }
        let inv = 1.0 / tokens.len() as f64;
        x.iter_mut().for_each(|v| *v *= inv);
        let mut u = matvec(&self.w1, &x, d);
        for (ui, b) in u.iter_mut().zip(&self.b1) {
            *ui = (*ui + b).tanh();
        }
        let mut h = matvec(&self.w2, &u, d);
        for (hi, b) in h.iter_mut().zip(&self.b2) {
            *hi += b;
        }
        let logit = dot(&self.head, &h);
        Ok(Forward {
            tokens: tokens.to_vec(),
            pooled: x,
            hidden: u,
            h,
            logit,
        })
    }

    /// Forward passes for a batch of sequences, in input order.
    pub fn forward_batch(&self, batch: &[TokenSeq]) -> Result<Vec<Forward>> {
        batch.par_iter().map(|t| self.forward(t.as_slice())).collect()
    }

    pub fn add_scaled(&mut self, other: &EncoderParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub tokens: Vec<u32>,
    pub pooled: Vec<f64>,
    pub hidden: Vec<f64>,
    pub h: Vec<f64>,
    pub logit: f64,
}

/// Pair feature `h` and optionally its unit-norm copy `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub h: Vec<f64>,
    pub z: Option<Vec<f64>>,
}

impl Feature {
    pub fn new(h: Vec<f64>) -> Self {
        Feature { h, z: None }
    }

    pub fn with_normalized(h: Vec<f64>) -> Self {
        let z = normalize(&h);
        Feature { h, z: Some(z) }
    }
}

/// A vocabulary together with trained parameters: everything needed to turn
/// text into features.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub vocab: Vocab,
    pub params: EncoderParams,
    pub max_tokens: usize,
}

impl Encoder {
    pub fn new(vocab: Vocab, params: EncoderParams, max_tokens: usize) -> Result<Self> {
        params.validate()?;
        if vocab.len() != params.vocab_size {
            return Err(Error::DimensionMismatch {
                expected: params.vocab_size,
                actual: vocab.len(),
            });
        }
        Ok(Encoder {
            vocab,
            params,
            max_tokens,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn tokens<'a>(&self, context: impl IntoIterator<Item = &'a str>, response: &str) -> TokenSeq {
        self.vocab.pair_tokens(context, response, self.max_tokens)
    }

    /// `h = g(c, r)` for one pair.
    pub fn encode_pair<'a>(&self, context: impl IntoIterator<Item = &'a str>, response: &str) -> Result<Feature> {
        encode_pair(&self.vocab, context, response, &self.params, self.max_tokens)
    }

    /// Features and classifier scores for many pairs, in input order.
    pub fn encode_many(&self, pairs: &[(Vec<&str>, &str)]) -> Result<(FeatureMatrix, Vec<f64>)> {
        let seqs: Vec<TokenSeq> = pairs
            .iter()
            .map(|(c, r)| self.tokens(c.iter().copied(), r))
            .collect();
        let fwd = self.params.forward_batch(&seqs)?;
        let logits = fwd.iter().map(|f| f.logit).collect();
        let rows: Vec<Vec<f64>> = fwd.into_iter().map(|f| f.h).collect();
        Ok((FeatureMatrix::from_rows(&rows, self.dim(), Provenance::TrainedEncoder)?, logits))
    }
}

/// Encodes `context [SEP] response`.
pub fn encode_pair<'a>(
    vocab: &Vocab,
    context: impl IntoIterator<Item = &'a str>,
    response: &str,
    params: &EncoderParams,
    max_tokens: usize,
) -> Result<Feature> {
    let seq = vocab.pair_tokens(context, response, max_tokens);
    // The separator alone carries no content.
    if seq.len() <= 1 {
        return Err(Error::InvalidInput("context and response are both empty".into()));
    }
    Ok(Feature::new(params.forward(seq.as_slice())?.h))
}

/// Classifier score `f = W·h`.
pub fn score_head(h: &[f64], params: &EncoderParams) -> Result<f64> {
    if h.len() != params.head.len() {
        return Err(Error::DimensionMismatch {
            expected: params.head.len(),
            actual: h.len(),
        });
    }
    Ok(dot(&params.head, h))
}

/// `h / max(|h|, 1e-12)`; the zero vector maps to itself.
pub fn normalize(h: &[f64]) -> Vec<f64> {
    let n = norm(h);
    if n == 0.0 {
        return vec![0.0; h.len()];
    }
    let s = 1.0 / n.max(NORM_EPS);
    h.iter().map(|v| v * s).collect()
}

/// Gradient through [`normalize`]: maps `dL/dz` to `dL/dh`.
pub fn normalize_backward(h: &[f64], z: &[f64], grad_z: &[f64]) -> Vec<f64> {
    let n = norm(h);
    // Below the floor z = h / eps, which is linear in h.
    if n < NORM_EPS {
        return grad_z.iter().map(|g| g / NORM_EPS).collect();
    }
    let proj = dot(z, grad_z);
    grad_z
        .iter()
        .zip(z)
        .map(|(g, zi)| (g - proj * zi) / n)
        .collect()
}

/// Reverse-mode gradients of the encoder parameters given `dL/dh` for each
/// pair. The head receives no gradient here; it only sees `dL/df`.
pub fn vjp(params: &EncoderParams, batch: &[TokenSeq], upstream: &[Vec<f64>]) -> Result<EncoderParams> {
    if batch.len() != upstream.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len(),
            actual: upstream.len(),
        });
    }
    let fwd = params.forward_batch(batch)?;
    vjp_cached(params, &fwd, upstream)
}

struct ChunkGrad {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    /// `dL/dx / n_tokens` per pair.
    pooled: Vec<Vec<f64>>,
}

/// [`vjp`] with forward intermediates already computed.
pub fn vjp_cached(params: &EncoderParams, fwd: &[Forward], upstream: &[Vec<f64>]) -> Result<EncoderParams> {
    let d = params.dim;
    if fwd.len() != upstream.len() {
        return Err(Error::DimensionMismatch {
            expected: fwd.len(),
            actual: upstream.len(),
        });
    }
    if let Some(g) = upstream.iter().find(|g| g.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: g.len(),
        });
    }
    let chunks: Vec<ChunkGrad> = fwd
        .par_chunks(GRAD_CHUNK)
        .zip(upstream.par_chunks(GRAD_CHUNK))
        .map(|(fs, gs)| {
            let mut c = ChunkGrad {
                w1: vec![0.0; d * d],
                b1: vec![0.0; d],
                w2: vec![0.0; d * d],
                b2: vec![0.0; d],
                pooled: Vec::with_capacity(fs.len()),
            };
            for (f, dh) in fs.iter().zip(gs) {
                for i in 0..d {
                    c.b2[i] += dh[i];
                    let row = &mut c.w2[i * d..(i + 1) * d];
                    for (r, u) in row.iter_mut().zip(&f.hidden) {
                        *r += dh[i] * u;
                    }
                }
                let du = matvec_t(&params.w2, dh, d);
                let da: Vec<f64> = du
                    .iter()
                    .zip(&f.hidden)
                    .map(|(g, u)| g * (1.0 - u * u))
                    .collect();
                for i in 0..d {
                    c.b1[i] += da[i];
                    let row = &mut c.w1[i * d..(i + 1) * d];
                    for (r, x) in row.iter_mut().zip(&f.pooled) {
                        *r += da[i] * x;
                    }
                }
                let inv = 1.0 / f.tokens.len() as f64;
                let mut dx = matvec_t(&params.w1, &da, d);
                dx.iter_mut().for_each(|v| *v *= inv);
                c.pooled.push(dx);
            }
            c
        })
        .collect();

    let mut grads = params.zeros_like();
    let mut pair = 0;
    for c in chunks {
        add_into(&mut grads.w1, &c.w1);
        add_into(&mut grads.b1, &c.b1);
        add_into(&mut grads.w2, &c.w2);
        add_into(&mut grads.b2, &c.b2);
        for dx in &c.pooled {
            for &t in &fwd[pair].tokens {
                let t = t as usize;
                add_into(&mut grads.embedding[t * d..(t + 1) * d], dx);
            }
            pair += 1;
        }
    }
    Ok(grads)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

/// `M·v` for a row-major `d x d` matrix.
fn matvec(m: &[f64], v: &[f64], d: usize) -> Vec<f64> {
    m.chunks_exact(d).map(|row| dot(row, v)).collect()
}

/// `Mᵀ·v` for a row-major `d x d` matrix.
fn matvec_t(m: &[f64], v: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (row, vi) in m.chunks_exact(d).zip(v) {
        for (o, r) in out.iter_mut().zip(row) {
            *o += r * vi;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EncoderParams {
        // V = 4, d = 2.
        let mut p = EncoderParams::zeros(4, 2);
        p.embedding = vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0, -1.0, 0.5];
        p.w1 = vec![0.5, -0.25, 1.0, 0.75];
        p.b1 = vec![0.1, -0.2];
        p.w2 = vec![1.5, 0.0, -0.5, 2.0];
        p.b2 = vec![0.3, -0.1];
        p.head = vec![1.0, -2.0];
        p
    }

    #[test]
    fn zero_embeddings_give_bias_only_output() {
        let mut p = tiny();
        p.embedding.iter_mut().for_each(|v| *v = 0.0);
        let h = p.forward(&[2, 3, 1]).unwrap().h;
        let u = [0.1f64.tanh(), (-0.2f64).tanh()];
        let expect = [1.5 * u[0] + 0.3, -0.5 * u[0] + 2.0 * u[1] - 0.1];
        for (a, b) in h.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_two_token_forward() {
        // tokens 2 and 3: x = ((1 - 1)/2, (2 + 0.5)/2) = (0, 1.25)
        // a = W1 x + b1 = (-0.3125 + 0.1, 0.9375 - 0.2) = (-0.2125, 0.7375)
        let p = tiny();
        let f = p.forward(&[2, 3]).unwrap();
        assert_eq!(f.pooled, vec![0.0, 1.25]);
        let u = [(-0.2125f64).tanh(), 0.7375f64.tanh()];
        let h = [1.5 * u[0] + 0.3, -0.5 * u[0] + 2.0 * u[1] - 0.1];
        assert!((f.h[0] - h[0]).abs() < 1e-14);
        assert!((f.h[1] - h[1]).abs() < 1e-14);
        assert!((f.logit - (h[0] - 2.0 * h[1])).abs() < 1e-14);
    }

    #[test]
    fn forward_is_deterministic() {
        let p = EncoderParams::init(10, 8, 1).unwrap();
        assert_eq!(p.forward(&[3, 4, 5]).unwrap(), p.forward(&[3, 4, 5]).unwrap());
        assert!(p.forward(&[]).is_err());
        assert!(p.forward(&[10]).is_err());
    }

    #[test]
    fn score_head_cases() {
        let mut p = EncoderParams::zeros(3, 4);
        let h = [0.3, -1.2, 2.5, 0.7];
        assert_eq!(score_head(&h, &p).unwrap(), 0.0);
        p.head = vec![1.0, 0.0, 0.0, 0.0];
        assert_eq!(score_head(&h, &p).unwrap(), 0.3);
        p.head = vec![0.5, -1.0, 2.0, 3.0];
        let oracle = 0.5 * 0.3 + 1.2 + 5.0 + 2.1;
        assert!((score_head(&h, &p).unwrap() - oracle).abs() < 1e-12);
        assert!(score_head(&h[..3], &p).is_err());
    }

    #[test]
    fn normalize_cases() {
        let z = normalize(&[3.0, 4.0]);
        assert!((z[0] - 0.6).abs() < 1e-15 && (z[1] - 0.8).abs() < 1e-15);
        assert_eq!(normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn vjp_zero_upstream_is_zero() {
        let p = EncoderParams::init(6, 3, 2).unwrap();
        let batch = vec![TokenSeq(vec![1, 2, 3]), TokenSeq(vec![4, 5])];
        let g = vjp(&p, &batch, &[vec![0.0; 3], vec![0.0; 3]]).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|v| *v == 0.0)));
        assert!(vjp(&p, &batch, &[vec![0.0; 3]]).is_err());
        assert!(vjp(&p, &batch, &[vec![0.0; 3], vec![0.0; 2]]).is_err());
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let p = EncoderParams::init(20, 16, 9).unwrap();
        let bound = 0.25;
        assert!(p.embedding.iter().chain(&p.w1).chain(&p.w2).chain(&p.head).all(|v| v.abs() <= bound));
        assert!(p.b1.iter().chain(&p.b2).all(|v| *v == 0.0));
        assert_eq!(p, EncoderParams::init(20, 16, 9).unwrap());
        p.validate().unwrap();
    }
}
