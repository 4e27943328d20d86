//! Reproducible per-purpose seed streams.

/// What a derived seed is used for; each purpose gets an independent stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Init,
    Train,
    Synthesis,
    BaselineInit,
    BaselineTrain,
    Dataset,
    Folds,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Init => 1,
            Purpose::Train => 2,
            Purpose::Synthesis => 3,
            Purpose::BaselineInit => 4,
            Purpose::BaselineTrain => 5,
            Purpose::Dataset => 6,
            Purpose::Folds => 7,
        }
    }
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes `(master, fold, generation, purpose)` into a 64-bit seed.
pub fn derive_seed(master: u64, fold: usize, generation: usize, purpose: Purpose) -> u64 {
    let mut h = mix(master ^ 0x6564_7273_5eed);
    for part in [fold as u64, generation as u64, purpose.tag()] {
        h = mix(h.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ part);
    }
    h
}
