//! Named random sub-streams derived from one seed.
//!
//! Every consumer of randomness draws from its own ChaCha stream, so turning
//! an ablation on or off never shifts the data or the shuffle order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Shuffle = 3,
    Caption = 4,
    Split = 5,
}

/// RNG for `(seed, stream)`, optionally further keyed by `salt`
/// (a domain index, a sample index, ...).
pub fn stream_rng(seed: u64, stream: Stream, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream as u64);
    rng
}

/// Stable 64-bit FNV-1a hash, used to key streams by strings.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
