//! Counter-based seed splitting.
//!
//! A [`Stream`] is a 64-bit key. Children are derived by mixing the parent key
//! with an index, so any trial, step or matrix can be addressed directly and
//! parallel work never shares a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Generator used throughout the crate.
pub type Rng = ChaCha12Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Address of an independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Stream(u64);

impl Stream {
    pub fn root(seed: u64) -> Self {
        Stream(splitmix(seed))
    }

    pub fn child(self, index: u64) -> Self {
        Stream(splitmix(self.0 ^ splitmix(index.wrapping_mul(0xD1B5_4A32_D192_ED03))))
    }

    pub fn key(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> Rng {
        let mut seed = [0u8; 32];
        let mut k = self.0;
        for chunk in seed.chunks_mut(8) {
            k = splitmix(k);
            chunk.copy_from_slice(&k.to_le_bytes());
        }
        Rng::from_seed(seed)
    }
}

/// Well-known child indices so unrelated draws never collide.
pub mod lane {
    pub const ENTRIES: u64 = 1;
    pub const GINIBRE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const PROBE: u64 = 4;
    pub const TRIAL: u64 = 5;
    pub const ARM: u64 = 6;
}
