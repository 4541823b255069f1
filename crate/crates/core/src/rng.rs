//! Seeded, splittable randomness.
//!
//! All sampling in this crate flows through ChaCha8 (`rand_chacha`), a
//! counter-based generator: a 64-bit seed expands via `seed_from_u64`, and
//! independent substreams come from ChaCha's 64-bit stream id. Reruns with the
//! same seed therefore reproduce drawn action ids bit-for-bit, and any other
//! implementation of the same generator can match the sequences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Root generator for a run.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream `stream` of the generator seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = seeded(seed);
    rng.set_stream(stream);
    rng
}
