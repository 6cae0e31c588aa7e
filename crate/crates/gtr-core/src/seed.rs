//! Stable seed derivation: one global seed fans out into named streams so
//! adding a stage never perturbs another stage's randomness.

use sha2::{Digest, Sha256};

/// 32-byte ChaCha seed derived from the global seed and a stream path.
///
/// The derivation hashes the little-endian seed followed by every path part,
/// each terminated by a zero byte, so `["a", "bc"]` and `["ab", "c"]` differ.
pub fn derive_seed_bytes(seed: u64, parts: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    hasher.finalize().into()
}

/// A `u64` sub-seed for APIs that want one.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let bytes = derive_seed_bytes(seed, parts);
    u64::from_le_bytes(bytes[..8].try_into().expect("sha256 yields 32 bytes"))
}
