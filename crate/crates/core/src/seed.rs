//! Counter-based seed splitting.
//!
//! Every random stream is identified by `(master, purpose, index)`, so a
//! realization's draws do not depend on which worker runs it or when.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes.
pub mod purpose {
    pub const PROCESS_NOISE: u64 = 1;
    pub const MEASUREMENT_NOISE: u64 = 2;
    pub const CHAIN: u64 = 3;
    pub const CHAIN_START: u64 = 4;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, purpose: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ purpose) ^ index)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(master: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(master, purpose, index))
}
