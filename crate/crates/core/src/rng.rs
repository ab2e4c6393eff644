//! Counter-based random streams.
//!
//! Every replicate, probe or sweep cell draws from its own ChaCha stream
//! selected by hashing a key tuple, so results never depend on the order
//! in which parallel jobs are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `seed` selected by `key`.
pub fn stream(seed: u64, key: &[u64]) -> ChaCha8Rng {
    let mut id = 0x5851_F42D_4C95_7F2D_u64;
    for &k in key {
        id = splitmix64(id ^ k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stable key component for a real parameter such as a penalty weight.
pub fn real_key(x: f64) -> u64 {
    x.to_bits()
}
