//! Named random sub-streams derived from one experiment seed.
//!
//! Every consumer of randomness (data shuffling, class sampling, data
//! generation) gets its own ChaCha stream, so adding draws to one consumer
//! never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const SHUFFLE: &str = "shuffle";
pub const CLASS_SAMPLING: &str = "class-sampling";
pub const DATA: &str = "data";
pub const INIT: &str = "init";

/// FNV-1a, stable across platforms and releases.
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn substream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}
