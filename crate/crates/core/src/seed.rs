//! Stable seed derivation. Each random stream in the crate is keyed by a path
//! of integers (base seed, epoch, batch, sample, ...), so results do not depend
//! on the order in which work items are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a key path into a single 64-bit seed.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(base: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(base, path))
}

/// Stream tags, so that e.g. the positive and negative phases of the same
/// minibatch never share a stream.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const POSITIVE: u64 = 3;
    pub const NEGATIVE: u64 = 4;
    pub const PERSISTENT_INIT: u64 = 5;
    pub const IMPUTE: u64 = 6;
    pub const MASK: u64 = 7;
    pub const SPLIT: u64 = 8;
    pub const TRAIN: u64 = 9;
    pub const SUBSAMPLE: u64 = 10;
    pub const STOPPER: u64 = 11;
}
