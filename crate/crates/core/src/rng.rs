//! Seeded random streams.
//!
//! Every bulk Monte Carlo routine splits its work into fixed-size chunks and
//! gives chunk `i` the ChaCha stream `i` of a generator keyed by the master
//! seed and a task tag. Chunk boundaries never depend on the number of
//! worker threads, so results are identical for any pool size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Items handled per random stream in chunked parallel loops.
pub const CHUNK: usize = 256;

/// Generator for chunk `index` of the task identified by `tag`.
pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    // splitmix64 finalizer decorrelates nearby (seed, tag) pairs
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(z);
    rng.set_stream(index);
    rng
}

/// Task tags, kept distinct so that tasks sharing a seed draw independent numbers.
pub mod tag {
    pub const FUBINI_STUDY: u64 = 1;
    pub const BACKWARD: u64 = 2;
    pub const LEBESGUE: u64 = 3;
    pub const DECOMPOSE_NODES: u64 = 4;
    pub const DECOMPOSE_BRANCHES: u64 = 5;
    pub const GORDIN: u64 = 6;
    pub const CLT: u64 = 7;
    pub const BOOTSTRAP: u64 = 8;
    pub const LIPSCHITZ: u64 = 9;
}
