//! Deterministic derivation of independent random streams.
//!
//! Every stochastic routine in the crate draws from a [`SimRng`] built from a
//! 64-bit master seed plus a path of integer coordinates (grid indices,
//! replicate number, ...). Streams depend only on that path, never on the
//! order in which workers happen to run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream used throughout the crate.
pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a master seed together with a coordinate path into a new seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for (depth, &c) in path.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(c.wrapping_add((depth as u64 + 1).wrapping_mul(GOLDEN))));
    }
    h
}

/// Stream for the given master seed and coordinate path.
pub fn stream(master: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, path))
}
