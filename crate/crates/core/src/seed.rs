//! Seed derivation. A single user seed is split into independent per-stage
//! streams by hashing it together with a stage name, so adding draws to one
//! stage never shifts another stage's randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StageRng = ChaCha8Rng;

/// Derives the seed for `stage` from the root seed. `stage` is a
/// slash-separated label such as `"train"` or `"collect/ck0.25/ep3"`.
pub fn derive(root: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stage_rng(root: u64, stage: &str) -> StageRng {
    ChaCha8Rng::seed_from_u64(derive(root, stage))
}
