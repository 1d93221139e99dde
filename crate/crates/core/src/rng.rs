//! Seeded random streams. All randomness in the crate is drawn from here.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// A deterministic stream keyed by `(seed, stream_id)`. Different stream ids
/// under one seed select non-overlapping ChaCha streams.
pub fn rng_stream(seed: u64, stream_id: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
