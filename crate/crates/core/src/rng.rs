//! Deterministic per-stream random generators derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream purposes, so two consumers of the same (run, student) never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Population = 1,
    Teacher = 2,
    Student = 3,
    Session = 4,
    Bootstrap = 5,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generator for `(seed, stream, run, index)`. Independent of how many other
/// streams were created before, so parallel and serial runs agree.
pub fn stream_rng(seed: u64, stream: Stream, run: u64, index: u64) -> StreamRng {
    let mut key = splitmix64(seed);
    for part in [stream as u64, run, index] {
        key = splitmix64(key ^ part);
    }
    ChaCha8Rng::seed_from_u64(key)
}
