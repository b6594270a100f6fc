//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by
//! `(base_seed, index, stream)`, so any task can be regenerated on its own,
//! in any order, with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers. Distinct purposes never share a stream.
pub mod streams {
    pub const TASK_SIZES: u64 = 1;
    pub const TASK_POSITIONS: u64 = 2;
    pub const GP_DRAW: u64 = 3;
    pub const SMART_METER_CLIP: u64 = 4;
    pub const MASK: u64 = 5;
    pub const INIT: u64 = 6;
    pub const EVAL_SUITE: u64 = 7;
    pub const OOD_TRANSFORM: u64 = 8;
    pub const IMAGES: u64 = 9;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A generator determined entirely by its three keys.
pub fn stream(base_seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut state = base_seed;
    let mut key = [0u8; 32];
    let words = [
        splitmix64(&mut state),
        splitmix64(&mut state) ^ index,
        splitmix64(&mut state) ^ stream.rotate_left(32),
        splitmix64(&mut state),
    ];
    // One more mixing round so nearby (index, stream) pairs share no key words.
    let mut mix = words[1] ^ words[2].rotate_left(17);
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&(w ^ splitmix64(&mut mix)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
