//! Keyed, reproducible random streams.
//!
//! Every source of randomness in the pipeline is a ChaCha8 stream keyed by
//! `(master_seed, actor_id, stream_tag)`. Clients never share a stream, so
//! reports are reproducible regardless of execution order, and re-running a
//! single client in isolation yields the identical report.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Namespaces for independent random streams under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    /// Per-client adjacency-bit perturbation.
    Adjacency = 0,
    /// Per-client feature-bit perturbation.
    Features = 1,
    /// Node role shuffling for train/val/test splits.
    Split = 2,
    /// GCN weight initialization.
    GcnInit = 3,
    /// Per-epoch dropout masks.
    Dropout = 4,
    /// Synthetic dataset generation.
    Synthetic = 5,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the ChaCha key for `(master_seed, actor_id, tag)`.
pub fn derive_key(master_seed: u64, actor_id: u64, tag: StreamTag) -> [u8; 32] {
    let mut state = master_seed
        ^ actor_id.wrapping_mul(0xA076_1D64_78BD_642F)
        ^ (tag as u64).wrapping_mul(0xE703_7ED1_A0B4_28DB);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// A seeded stream for one actor and purpose.
pub fn stream_rng(master_seed: u64, actor_id: u64, tag: StreamTag) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_key(master_seed, actor_id, tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_stream() {
        let mut a = stream_rng(7, 3, StreamTag::Adjacency);
        let mut b = stream_rng(7, 3, StreamTag::Adjacency);
        let xs: Vec<u64> = (0..16).map(|_| a.random()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.random()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn streams_differ_across_actors_and_tags() {
        let mut base = stream_rng(7, 3, StreamTag::Adjacency);
        let mut other_actor = stream_rng(7, 4, StreamTag::Adjacency);
        let mut other_tag = stream_rng(7, 3, StreamTag::Features);
        let x: u64 = base.random();
        assert_ne!(x, other_actor.random::<u64>());
        assert_ne!(x, other_tag.random::<u64>());
    }

    #[test]
    fn keys_are_stable() {
        // Frozen so serialized rounds stay reproducible across releases.
        let k = derive_key(0, 0, StreamTag::Adjacency);
        assert_eq!(
            &k[..8],
            &[0xaf, 0xcd, 0x1d, 0x7b, 0x39, 0xa8, 0x20, 0xe2]
        );
    }
}
