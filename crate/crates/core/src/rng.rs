use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const GEOMETRY: u64 = 1;
pub(crate) const CHANNEL: u64 = 2;
pub(crate) const SYNTHETIC: u64 = 3;
pub(crate) const GROUPS: u64 = 4;

/// Independent stream per (seed, purpose, a, b). Streams never depend on the
/// order in which they are requested.
pub(crate) fn stream(seed: u64, purpose: u64, a: usize, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) ^ ((a as u64) << 28) ^ b as u64);
    rng
}
