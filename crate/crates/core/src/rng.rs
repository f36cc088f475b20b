//! Named, reproducible random streams derived from the audit's master seed.
//!
//! A stream is a ChaCha8 generator whose key is SHA-256(master_seed, name).
//! Substreams share the key and differ only in the ChaCha stream id, so
//! parallel workers can each own one without coordination.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedStream {
    key: [u8; 32],
    name: String,
}

impl NamedStream {
    pub fn new(master_seed: u64, name: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"ttifair/stream/v1\0");
        h.update(master_seed.to_le_bytes());
        h.update(name.as_bytes());
        let mut key = [0u8; 32];
        key.copy_from_slice(&h.finalize());
        Self {
            key,
            name: name.to_owned(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// A child stream keyed by `self.name + "/" + name`.
    pub fn child(&self, master_seed: u64, name: &str) -> Self {
        Self::new(master_seed, &format!("{}/{}", self.name, name))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        self.substream(0)
    }

    pub fn substream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}
