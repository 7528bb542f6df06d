//! Seed fan-out.
//!
//! Every random draw in the crate comes from one user seed. Each consumer gets
//! its own ChaCha stream, selected by a fixed stream id, so adding draws in one
//! place never shifts the numbers another place sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the independent consumers of the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Corpus = 1,
    Split = 2,
    Negatives = 3,
    Init = 4,
    Shuffle = 5,
    Adversarial = 6,
    ValNegatives = 7,
    Jitter = 8,
    Permutation = 9,
}

/// RNG for `stream` under `seed`; `sub` selects a further sub-stream (for
/// example the epoch number).
pub fn rng(seed: u64, stream: Stream, sub: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | (sub & 0xffff_ffff));
    rng
}
