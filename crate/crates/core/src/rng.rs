//! Seeded randomness.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`], which produces the
//! same stream on every platform. Independent consumers derive their own stream
//! from a single experiment seed through [`child_seed`], keyed by a stream name.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over bytes, finished with [`mix64`].
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(h)
}

/// Seed for the named child stream of `seed`.
pub fn child_seed(seed: u64, stream: &str) -> u64 {
    mix64(seed ^ hash_bytes(stream.as_bytes()))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for the named child stream of `seed`.
pub fn child(seed: u64, stream: &str) -> Rng {
    seeded(child_seed(seed, stream))
}
