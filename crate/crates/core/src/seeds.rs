use sha2::{Digest, Sha256};

/// Stable 64-bit seed derived from a root seed and a tagged path of strings.
pub(crate) fn derive_seed(root: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
