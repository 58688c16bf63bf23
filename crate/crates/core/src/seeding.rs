//! Deterministic seed derivation for reproducible experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent child seed from a master seed, a stream label and
/// an index (SplitMix64 finalizer over the combined words).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream labels so that truth, inputs and noise of one run never share a seed.
pub mod stream {
    pub const TRUTH: u64 = 1;
    pub const INPUTS: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const TOPOLOGY: u64 = 5;
    pub const ANCHORS: u64 = 6;
}
