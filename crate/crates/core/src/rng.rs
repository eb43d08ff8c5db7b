//! Seed derivation. Every stochastic routine takes an explicit RNG so runs
//! are reproducible; per-item streams are derived from `(seed, id)` so that
//! results do not depend on processing order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// One step of SplitMix64.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(splitmix64(seed))
}

/// Independent stream for item `id` under a global seed.
pub fn derive_rng(seed: u64, id: u64) -> Rng {
    Rng::seed_from_u64(splitmix64(splitmix64(seed) ^ id.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
}

/// Stable 64-bit FNV-1a hash, used for reproducibility fingerprints.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn hash_f64s(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}
