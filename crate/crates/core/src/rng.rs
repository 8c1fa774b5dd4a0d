//! Seeded random streams.
//!
//! Every stochastic component takes an explicit generator. Monte Carlo
//! trials draw from ChaCha substreams keyed by `(master seed, domain, index)`
//! so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream domains keep unrelated consumers of one master seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Dataset = 1,
    Shuffle = 2,
    Training = 3,
    Sweep = 4,
    Evaluate = 5,
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn substream(master: u64, domain: Domain, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(splitmix64(master ^ splitmix64(domain as u64)));
    rng.set_stream(index);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
