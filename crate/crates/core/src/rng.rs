//! Named, counter-addressed random substreams.
//!
//! Every random draw in the workbench comes from `streams.get(name, index)`.
//! A stream's seed is a hash of `(master, name, index)`, so the values a
//! component sees depend only on its own address and never on how many
//! draws other components made or in which order work was scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        SeedTree { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn get(&self, name: &str, index: u64) -> StreamRng {
        let mut h = Sha256::new();
        h.update(self.master.to_le_bytes());
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update(index.to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(seed)
    }

    /// An independent tree for a sub-component, keyed by `name`.
    pub fn child(&self, name: &str) -> SeedTree {
        SeedTree::new(self.get(name, u64::MAX).next_u64())
    }
}
