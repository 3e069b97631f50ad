//! Seeded random streams.
//!
//! Every random decision is drawn from a ChaCha stream keyed by
//! `(seed, purpose, user, epoch)`, so results do not depend on the order in
//! which users are visited or on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// What a stream is used for; distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Negatives = 3,
    Corruption = 4,
    Selection = 5,
    Synthetic = 6,
    Bench = 7,
}

fn mix(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn stream(seed: u64, purpose: Stream, user: u64, epoch: u64) -> Rng {
    let key = mix(mix(mix(seed ^ mix(purpose as u64)) ^ user) ^ epoch.wrapping_mul(0x2545_f491_4f6c_dd1d));
    ChaCha8Rng::seed_from_u64(key)
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
