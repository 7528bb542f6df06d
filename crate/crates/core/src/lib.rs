//! Reference-free evaluation of dialogue responses by density estimation.
//!
//! A response is scored by how close its context–response feature lies to the
//! distribution of human conversations. The pipeline has four stages:
//!
//! ```text
//!  dialogues ──▶ corpus ──▶ training ──▶ encoder g(c, r) ──▶ density ──▶ eval
//!   (JSONL)      pairs +     selection     features h         Gaussian     correlation,
//!                negatives   + contrastive                    N(mu, Sigma)  probes, R@1/MRR
//! ```
//!
//! 1. [`corpus`] turns dialogues into positive context–response pairs, samples
//!    random negative candidates and builds adversarial probe responses.
//! 2. [`training`] fits the reference [`encoder`] with a response-selection
//!    cross-entropy plus a supervised contrastive term over positive pairs.
//! 3. [`density`] fits a single Gaussian over the features of all positive
//!    pairs and scores new responses by (negated) Mahalanobis distance.
//! 4. [`eval`] correlates scores with human judgments and computes probe and
//!    selection metrics.
//!
//! Features extracted by an external pretrained encoder can be plugged in
//! through the DENSF1 file format ([`encoder::features`]).
//!
//! The [`cli`] module backs the `density-eval` binary; the `examples/`
//! directory of this crate has one runnable program per capability.

pub mod cli;
pub mod corpus;
pub mod density;
pub mod encoder;
pub mod error;
pub mod pipeline;
pub mod eval;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
