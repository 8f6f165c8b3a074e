use sha2::{Digest, Sha256};

/// Hex SHA-256 of a UTF-8 string.
pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Process-independent 64-bit hash of a seed and a sequence of strings.
pub fn stable_u64(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// Uniform value in `[0, 1)` derived from [`stable_u64`].
pub fn stable_unit(seed: u64, parts: &[&str]) -> f64 {
    (stable_u64(seed, parts) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
