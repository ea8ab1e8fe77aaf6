//! Deterministic seed derivation. Every random stream in a run is keyed by
//! `(global seed, round, stream id)` so results do not depend on execution
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the non-client streams of a round. Client streams use the
/// client id, so tags live at the top of the `u64` range.
pub const SAMPLING_STREAM: u64 = u64::MAX;
pub const MASKING_STREAM: u64 = u64::MAX - 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(global: u64, round: u64, stream: u64) -> u64 {
    let a = splitmix64(global);
    let b = splitmix64(a ^ round);
    splitmix64(b ^ stream.rotate_left(17))
}

pub fn rng_for(global: u64, round: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(global, round, stream))
}
