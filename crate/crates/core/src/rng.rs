//! Named, seed-derived random streams.
//!
//! Every consumer of randomness takes a [`RandomStream`] obtained from one
//! global seed plus a label path (`"noise"`, `"sample/class-3"`, ...). The
//! stream key is a SHA-256 digest of the seed and the path, and the generator
//! is ChaCha20, so sequences are identical across runs and platforms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"calibre/stream/v1";

#[derive(Debug, Clone)]
pub struct RandomStream {
    key: [u8; 32],
    path: String,
    rng: ChaCha20Rng,
}

/// Opens the stream `label` under the global `seed`.
pub fn seeded_rng(seed: u64, label: &str) -> RandomStream {
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN);
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    RandomStream::from_key(hasher.finalize().into(), label.to_string())
}

impl RandomStream {
    fn from_key(key: [u8; 32], path: String) -> Self {
        Self {
            key,
            path,
            rng: ChaCha20Rng::from_seed(key),
        }
    }

    /// Derives an independent child stream. Depends only on this stream's
    /// key and `label`, never on how much of the parent has been consumed.
    pub fn child(&self, label: &str) -> RandomStream {
        let mut hasher = Sha256::new();
        hasher.update(DOMAIN);
        hasher.update(self.key);
        hasher.update(b"/");
        hasher.update(label.as_bytes());
        RandomStream::from_key(hasher.finalize().into(), format!("{}/{}", self.path, label))
    }

    /// Child stream keyed by an index, e.g. a class id or a trial number.
    pub fn child_indexed(&self, label: &str, index: usize) -> RandomStream {
        self.child(&format!("{label}-{index}"))
    }

    pub fn path(&self) -> &str {
        &self.path
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
