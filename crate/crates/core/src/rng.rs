//! Labeled random substreams.
//!
//! Every random decision in a run derives from one root seed. A substream is
//! keyed by the root seed and a label such as `"negatives/client3/round7"`,
//! so the draw sequence of one consumer never depends on how many numbers
//! another consumer pulled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// 32 bytes of key material for `(root, label)`.
pub fn derive_key(root: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"fedkg.substream.v1");
    hasher.update(root.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.finalize().into()
}

pub fn derive_seed(root: u64, label: &str) -> u64 {
    let key = derive_key(root, label);
    u64::from_le_bytes(key[..8].try_into().expect("8 bytes"))
}

pub fn substream(root: u64, label: &str) -> StreamRng {
    ChaCha8Rng::from_seed(derive_key(root, label))
}
