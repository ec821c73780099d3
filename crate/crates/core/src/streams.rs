//! Counter-derived RNG streams.
//!
//! Every random draw in a run is keyed by `(base seed, labels...)` so results
//! do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of labels into a base seed.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(base), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

/// Returns an RNG for stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
