//! Stable seed derivation.
//!
//! Every participant (and every sweep point) gets its own stream derived from
//! the study seed with SplitMix64 finalisation, so adding participants never
//! perturbs the streams of existing ones. The function is part of the log
//! format: changing it changes every recorded run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `hash64(seed, stream) = splitmix64(seed ^ splitmix64(stream))`.
pub fn hash64(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Stream tags for the independent generators owned by one participant.
pub(crate) mod stream {
    pub const COHORT: u64 = 0xC0;
    pub const ENV: u64 = 0xE1;
    pub const AGENT: u64 = 0xA6;
    pub const POLICY: u64 = 0x90;
    pub const TRIGGER: u64 = 0x7A;
    pub const ALLOCATION: u64 = 0xA1;
}
