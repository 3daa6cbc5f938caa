//! Deterministic RNG streams.
//!
//! Every source of randomness in a run is a ChaCha8 stream derived from the
//! single top-level seed plus a list of integer tags (client id, round
//! number, stage id, ...). Streams are independent of scheduling, so
//! per-client work may run on any worker thread without changing results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage tags used when deriving sub-streams from the top-level seed.
pub mod stage {
    pub const DATA: u64 = 1;
    pub const PARTITION: u64 = 2;
    pub const MODEL_INIT: u64 = 3;
    pub const LOCAL_TRAIN: u64 = 4;
    pub const SELECTION: u64 = 5;
    pub const SIGNATURE: u64 = 6;
    pub const UMAP: u64 = 7;
    pub const FINETUNE: u64 = 8;
}

fn mix(mut state: u64, value: u64) -> u64 {
    // splitmix64 finalizer, applied per tag
    state = state.wrapping_add(value).wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a reproducible stream from `seed` and a list of tags.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tags))
}

/// Derives a child seed from `seed` and a list of tags.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut s = mix(0x5bd1_e995_0b54_8d2b, seed);
    for &t in tags {
        s = mix(s, t);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_tags_same_stream() {
        let mut a = stream(42, &[stage::LOCAL_TRAIN, 3, 7]);
        let mut b = stream(42, &[stage::LOCAL_TRAIN, 3, 7]);
        for _ in 0..16 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn different_tags_diverge() {
        let mut a = stream(42, &[stage::LOCAL_TRAIN, 3, 7]);
        let mut b = stream(42, &[stage::LOCAL_TRAIN, 3, 8]);
        let same = (0..16).filter(|_| a.random::<u64>() == b.random::<u64>()).count();
        assert!(same < 2);
    }
}
