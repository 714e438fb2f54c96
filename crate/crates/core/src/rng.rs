//! Seeded, counter-based random streams.
//!
//! Every stochastic operation takes an explicit seed. Independent purposes draw
//! from distinct ChaCha streams of the same seed so that adding draws for one
//! purpose never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream identifiers. Values are part of the reproducibility contract.
pub mod stream {
    pub const PARAM_INIT: u64 = 1;
    pub const EMBEDDING: u64 = 2;
    pub const INPUT_FUNCTIONS: u64 = 3;
    pub const COLLOCATION: u64 = 4;
    pub const MINIBATCH: u64 = 5;
    pub const WEIGHTING: u64 = 6;
}

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a per-item seed (e.g. one per generated sample) from a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
