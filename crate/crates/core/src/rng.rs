//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from ChaCha20 keyed by a
//! 64-bit seed. The 32-byte key is the little-endian concatenation of four
//! successive SplitMix64 outputs started at the seed, so any language with a
//! ChaCha20 block function can regenerate the same streams.
//!
//! Sub-seeds (one per purpose: codebook, noise, split, ...) are derived with
//! [`derive_seed`], which mixes the parent seed and a stream index through
//! SplitMix64.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Generator used for every seeded stream.
pub type HdRng = ChaCha20Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> HdRng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}

/// Child seed number `stream` of `parent`.
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    let mut state = parent ^ stream.wrapping_mul(GOLDEN_GAMMA).rotate_left(17);
    splitmix64(&mut state);
    splitmix64(&mut state)
}
