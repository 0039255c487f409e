//! Seeded, splittable random number generation.
//!
//! All randomized operations take explicit seeds; parallel trials derive
//! independent streams from (seed, stream index) so results are reproducible
//! regardless of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SosRng = ChaCha12Rng;

/// Counter-based generator keyed by `seed`.
pub fn seeded_rng(seed: u64) -> SosRng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Independent stream `stream` under the same key.
pub fn stream_rng(seed: u64, stream: u64) -> SosRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
