//! Seed derivation and RNG construction.
//!
//! Every random operation in the crate takes an explicit `u64` seed and is
//! bit-reproducible. Parallel units (chains, rows) draw from per-unit ChaCha
//! streams so partitioning work across threads cannot change the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from a master seed and a context label.
///
/// Distinct labels yield statistically independent child seeds, so callers
/// (e.g. pipeline stages) never share an RNG stream by accident.
pub fn derive_seed(master: u64, context: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([0x1f]); // domain separator between seed and label
    hasher.update(context.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// RNG for one numbered parallel unit (chain index, row index) under a seed.
///
/// Streams with the same seed and different indices never overlap, which is
/// what makes per-chain parallelism deterministic.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Lowercase hex SHA-256 of a byte slice; used for artifact fingerprints.
pub fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_differ_by_label() {
        let a = derive_seed(42, "stage1");
        let b = derive_seed(42, "stage2");
        let c = derive_seed(43, "stage1");
        assert_ne!(a, b);
        assert_ne!(a, c);
        // stable across calls
        assert_eq!(a, derive_seed(42, "stage1"));
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let mut r0 = stream_rng(7, 0);
        let mut r1 = stream_rng(7, 1);
        let x0: u64 = r0.random();
        let x1: u64 = r1.random();
        assert_ne!(x0, x1);
        let mut again = stream_rng(7, 0);
        assert_eq!(x0, again.random::<u64>());
    }

    #[test]
    fn sha256_hex_known_value() {
        // echo -n "abc" | sha256sum
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
