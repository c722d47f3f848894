//! Deterministic random streams.
//!
//! Every realization owns a ChaCha8 stream whose 256-bit key is expanded
//! from a 128-bit hash of `(master_seed, index)`. The key depends only on
//! those two numbers, so realizations can run in any order on any number
//! of workers and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 128-bit hash of a `(seed, index)` pair, returned as two words.
pub fn hash128(seed: u64, index: u64) -> (u64, u64) {
    let a = mix64(seed ^ GOLDEN);
    let b = mix64(index.wrapping_add(0x6A09_E667_F3BC_C909) ^ a.rotate_left(17));
    let hi = mix64(a ^ b.wrapping_mul(GOLDEN));
    let lo = mix64(b ^ hi.rotate_left(29) ^ 0xBB67_AE85_84CA_A73B);
    (hi, lo)
}

/// Stream for realization `index` under `master_seed`.
pub fn stream(master_seed: u64, index: u64) -> StreamRng {
    let (hi, lo) = hash128(master_seed, index);
    let mut key = [0u8; 32];
    let mut state = hi;
    for (k, chunk) in key.chunks_exact_mut(8).enumerate() {
        state = state.wrapping_add(GOLDEN);
        let word = mix64(state ^ if k % 2 == 0 { lo } else { lo.rotate_left(32) });
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Counter-based bit supply (SplitMix64) used to extend binary expansions.
#[derive(Debug, Clone)]
pub struct BitSupply {
    state: u64,
    word: u64,
    left: u32,
}

impl BitSupply {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            word: 0,
            left: 0,
        }
    }

    #[inline]
    pub fn next_bit(&mut self) -> u64 {
        if self.left == 0 {
            self.state = self.state.wrapping_add(GOLDEN);
            self.word = mix64(self.state);
            self.left = 64;
        }
        let bit = self.word & 1;
        self.word >>= 1;
        self.left -= 1;
        bit
    }
}
