//! Reproducible random streams.
//!
//! Every consumer derives its own generator from `(seed, domain, index)` so
//! results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ domain) ^ index)
}

pub fn stream(seed: u64, domain: u64, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(mix(seed, domain, index))
}

/// Stream for item `b` of round `a`, e.g. particle `b` at filter step `a`.
pub fn substream(seed: u64, domain: u64, a: u64, b: u64) -> StreamRng {
    stream(mix(seed, domain, a), domain, b)
}

/// Domain tags keep the streams of different consumers apart.
pub mod domain {
    pub const INIT: u64 = 0x1001;
    pub const MOTION: u64 = 0x1002;
    pub const RESAMPLE: u64 = 0x1003;
    pub const ODOMETRY: u64 = 0x2001;
    pub const PLANES: u64 = 0x2002;
    pub const CLOUD: u64 = 0x2003;
    pub const RANSAC: u64 = 0x2004;
}
