//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every stochastic unit of work (an anneal, a programming cycle, a PT chain)
//! gets its own generator seeded from the master seed and its coordinates, so
//! results never depend on how the work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags keep generators for different purposes apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Anneal = 1,
    Cycle = 2,
    Tempering = 3,
    Decode = 4,
    Embed = 5,
    Experiment = 6,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a master seed with a stream tag and a list of coordinates.
pub fn derive_seed(master: u64, stream: Stream, coords: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ (stream as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c));
    }
    h
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn derive_rng(master: u64, stream: Stream, coords: &[u64]) -> Rng {
    rng_from_seed(derive_seed(master, stream, coords))
}
