//! Named random substreams derived from a single experiment seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Deterministic generator for `(seed, name, indices)`. Distinct names or
/// indices give statistically independent streams.
pub fn substream(seed: u64, name: &str, indices: &[u64]) -> SimRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((name.len() as u64).to_le_bytes());
    hasher.update(name.as_bytes());
    for i in indices {
        hasher.update(i.to_le_bytes());
    }
    SimRng::from_seed(hasher.finalize().into())
}

/// A `u64` drawn from a named substream, for APIs that take integer seeds.
pub fn subseed(seed: u64, name: &str, indices: &[u64]) -> u64 {
    use rand::RngCore;
    substream(seed, name, indices).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = substream(1, "data", &[]).random();
        let b: u64 = substream(1, "data", &[]).random();
        let c: u64 = substream(1, "init", &[]).random();
        let d: u64 = substream(1, "data", &[0]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
