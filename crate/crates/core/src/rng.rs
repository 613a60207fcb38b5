//! Deterministic random streams.
//!
//! One counter-based generator per run seed, with disjoint substreams so
//! that disturbance generation, participation sampling, shift schedules,
//! and prediction noise never interleave. Regenerating any component with
//! the same seed yields bit-identical output regardless of what the other
//! components consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_DISTURBANCE: u64 = 0;
pub const STREAM_PARTICIPATION: u64 = 1;
pub const STREAM_SHIFTS: u64 = 2;
pub const STREAM_PREDICTION_NOISE: u64 = 3;
pub const STREAM_CONSTANT_PROBE: u64 = 4;

/// Generator for one named substream of a run seed.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// FNV-1a over raw bytes; used for stable provenance fingerprints.
/// (The std hasher is randomized per process and cannot be used here.)
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
