use sha2::{Digest, Sha256};

/// Derives an independent 64-bit seed from a base seed and a tagged context,
/// so per-round and per-client streams do not depend on scheduling order.
pub(crate) fn derive_seed(base: u64, label: &str, tags: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    for tag in tags {
        hasher.update(tag.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
