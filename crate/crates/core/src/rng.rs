//! Seeded random streams.
//!
//! Every consumer derives its generator from a master seed plus a stream
//! index, so results do not depend on scheduling when work runs in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A child seed for a nested consumer (e.g. one replicate of a scenario).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, index.wrapping_add(1 << 32)).next_u64()
}
