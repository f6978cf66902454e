//! Deterministic substream derivation for reproducible Monte Carlo.
//!
//! One root seed spawns independent substreams keyed by integer tags
//! (replication, step, prompt, phase). Keys are mixed with SplitMix64 and
//! expanded into a 32-byte ChaCha8 seed, so any (seed, tags) pair maps to
//! the same stream on every platform and regardless of how many threads are
//! running. Paired policy comparisons rely on this: two policies reading the
//! same tagged stream see identical draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold `tags` into `seed`, producing a derived 64-bit key.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(seed);
    for &tag in tags {
        state = splitmix64(state ^ tag.wrapping_mul(GOLDEN_GAMMA));
    }
    state
}

/// A ChaCha8 stream keyed by `(seed, tags)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let key = mix(seed, tags);
    let mut bytes = [0u8; 32];
    let mut word = key;
    for chunk in bytes.chunks_exact_mut(8) {
        word = splitmix64(word);
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// One Beta(alpha, beta) draw via the gamma-ratio construction
/// `X / (X + Y)` with `X ~ Gamma(alpha, 1)` and `Y ~ Gamma(beta, 1)`.
pub fn sample_beta<R: Rng>(rng: &mut R, alpha: f64, beta: f64) -> f64 {
    use rand_distr::{Distribution, Gamma};
    let x = Gamma::new(alpha, 1.0).expect("alpha > 0").sample(rng);
    let y = Gamma::new(beta, 1.0).expect("beta > 0").sample(rng);
    x / (x + y)
}
