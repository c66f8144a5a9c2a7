//! Deterministic seed derivation.
//!
//! Every source of randomness in a run (weight init, epoch shuffles, attack
//! starts, evaluation attacks) draws from its own stream derived from the
//! single experiment seed, so that paired runs stay comparable and results
//! do not depend on thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags; each consumer of randomness gets its own constant.
pub mod stream {
    pub const INIT: u64 = 0x5eed_0001;
    pub const SHUFFLE: u64 = 0x5eed_0002;
    pub const ATTACK: u64 = 0x5eed_0003;
    pub const EVAL: u64 = 0x5eed_0004;
    pub const DATA: u64 = 0x5eed_0005;
}

/// SplitMix64 finalizer; decorrelates nearby inputs.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix an experiment seed with a stream tag and per-item indices into a
/// fresh sub-seed.
pub fn derive_seed(seed: u64, stream: u64, indices: &[u64]) -> u64 {
    let mut acc = splitmix(seed ^ splitmix(stream));
    for &ix in indices {
        acc = splitmix(acc ^ splitmix(ix.wrapping_add(0x1234_5678_9abc_def1)));
    }
    acc
}

/// Seeded generator for one derived stream.
pub fn rng_for(seed: u64, stream: u64, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, indices))
}
