//! Named, seed-derived random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by
//! `(seed, name, index)`, so adding draws to one stream never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const HAZARD: &str = "hazard";
pub const FORECAST: &str = "forecast";
pub const INIT: &str = "init";

pub fn substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    // FNV-1a over the name, then splitmix to spread the bits.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mixed = splitmix64(seed ^ splitmix64(h ^ splitmix64(index)));
    ChaCha8Rng::seed_from_u64(mixed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
