//! Labeled random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream whose seed is a
//! pure function of `(master seed, index, label)`. Adding a new consumer never
//! shifts the draws seen by existing ones.
//!
//! Seed derivation: `h = fnv1a64(label)`, then
//! `seed = mix(master ^ mix(index ^ mix(h)))` where `mix` is the SplitMix64
//! finalizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn derive_seed(master: u64, index: u64, label: &str) -> u64 {
    mix64(master ^ mix64(index ^ mix64(fnv1a64(label.as_bytes()))))
}

pub fn stream(master: u64, index: u64, label: &str) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, index, label))
}
