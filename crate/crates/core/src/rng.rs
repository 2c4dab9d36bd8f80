//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose 256-bit
//! key is `(run seed, purpose tag, a, b)`. Typical keys are
//! `(seed, FORWARD, time, particle)`; results therefore do not depend on the
//! order or thread in which particles are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Purpose tags separating forward-pass, chain and replicate randomness.
pub mod tag {
    pub const INIT: u64 = 0x1;
    pub const FORWARD: u64 = 0x2;
    pub const CHAIN: u64 = 0x3;
    pub const REPLICATE: u64 = 0x4;
    pub const NAIVE: u64 = 0x5;
    pub const TWISTED: u64 = 0x6;
    pub const TEST: u64 = 0xFF;
}

pub fn stream(seed: u64, purpose: u64, a: u64, b: u64) -> Stream {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    key[16..24].copy_from_slice(&a.to_le_bytes());
    key[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Derives a child seed (e.g. per replicate) from a parent seed.
pub fn derive_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    // SplitMix64 finaliser over a combination of the inputs.
    let mut z = seed
        ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
