//! Deterministic random streams.
//!
//! Every randomized operation in this crate derives its generator from a
//! single master seed plus a structured stream id. Work items (repetitions,
//! grid points, trials) get disjoint streams, so results are identical no
//! matter how the work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream `id` of the generator family keyed by `seed`.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stream keyed by (phase, grid point, repetition). Phases partition the id
/// space so distinct protocol stages never share a stream: 12 bits phase,
/// 20 bits point, 32 bits repetition.
pub fn stream3(seed: u64, phase: u32, point: u64, rep: u64) -> ChaCha8Rng {
    debug_assert!(phase < 1 << 12 && point < 1 << 20 && rep < 1 << 32);
    stream(seed, ((phase as u64) << 52) | (point << 32) | rep)
}
