//! Splittable seeding.
//!
//! Every random stream in the crate is addressed by a path of indices below a
//! master seed (`Seed(master).child(grid).child(replicate).child(tree)`), so a
//! result never depends on which thread consumed which stream first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator used for all sampling.
pub type Rng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Derive the seed of the `index`-th child stream.
    pub fn child(self, index: u64) -> Seed {
        let salt = mix64(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
        Seed(mix64(mix64(self.0) ^ salt))
    }

    pub fn rng(self) -> Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}
