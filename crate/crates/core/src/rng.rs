//! Deterministic seed streams.

use rand::SeedableRng;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;

/// Independent generator for `(seed, tag)`; distinct tags never share output.
pub fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(tag);
    r
}

/// Child seed derived from a master seed and a tag.
pub fn derive(seed: u64, tag: u64) -> u64 {
    stream(seed, tag ^ 0xd1b5_4a32_d192_ed03).next_u64()
}
