//! Seed derivation and independent random streams.
//!
//! Every random quantity in a run is drawn from a ChaCha stream keyed by the
//! master seed, the trial index and a purpose tag, so data and selection
//! draws never interfere and any trial can be regenerated on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Regressors and noise of one node.
    NodeData(usize),
    /// Neighbor-selection patterns for the whole network.
    Selection,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::NodeData(k) => 1 + k as u64,
            Purpose::Selection => 0,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed of `base` for an integer label.
pub fn derive_seed(base: u64, label: u64) -> u64 {
    mix(mix(base) ^ label.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Independent stream for one `(master_seed, trial, purpose)` triple.
pub fn stream(master_seed: u64, trial: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let words = [
        mix(master_seed),
        mix(master_seed ^ 0x5851_f42d_4c95_7f2d),
        mix(trial),
        mix(trial ^ 0x1405_7b7e_f767_814f),
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(purpose.tag());
    rng
}
