//! Deterministic RNG sub-streams.
//!
//! Every random decision in a run draws from a stream keyed by the run seed
//! plus a short path of integers (time step, node, message kind, ...). Two
//! decisions with different keys never share state, so evaluation order and
//! parallelism cannot change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream-domain tags, so that e.g. topology draws and mask draws with the
/// same numeric path stay independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Topology = 1,
    Mask = 2,
    Quantizer = 3,
    Data = 4,
    Init = 5,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a fresh generator for `(seed, domain, path...)`.
pub fn stream(seed: u64, domain: Domain, path: &[u64]) -> StreamRng {
    let mut h = splitmix64(seed ^ 0x5EED_0000_0000_0000);
    h = splitmix64(h ^ domain as u64);
    for &p in path {
        h = splitmix64(h ^ p);
    }
    ChaCha8Rng::seed_from_u64(h)
}
