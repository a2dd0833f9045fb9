use sha2::{Digest, Sha256};

/// Derives a seed from the master seed, a model index and a purpose tag
/// (such as an explainer tag). Pure, so results do not depend on the order
/// in which models are processed.
pub fn derive_seed(master: u64, model_index: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(model_index.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
