//! Named, seed-derived random streams.
//!
//! Every random decision in the pipeline draws from a ChaCha stream keyed by
//! `(seed, stream name, index...)`, so components can be varied or run in
//! parallel without perturbing each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Derives a 64-bit sub-seed from a base seed, a stream name and indices.
pub fn derive_seed(seed: u64, stream: &str, indices: &[u64]) -> u64 {
    let mut h = mix(seed ^ mix(name_hash(stream)));
    for &i in indices {
        h = mix(h ^ mix(i.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn stream(seed: u64, name: &str, indices: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, name, indices))
}
