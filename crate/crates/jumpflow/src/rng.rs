//! Counter-based random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream addressed by
//! `(seed, lane, index)`: the key is derived from the root seed and a lane tag
//! (which kind of randomness), the 64-bit stream id is the path index. Streams
//! never overlap and do not depend on the order in which paths are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

/// Lane tags for independent families of streams drawn from one root seed.
pub mod lane {
    pub const SMALL_JUMPS: u64 = 0;
    pub const BIG_JUMPS: u64 = 1;
    pub const AUX: u64 = 2;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream `index` of lane `lane` under root `seed`.
pub fn stream(seed: u64, lane: u64, index: u64) -> PathRng {
    let mut key = [0u8; 32];
    let mut s = seed ^ splitmix64(lane.wrapping_add(0xA076_1D64_78BD_642F));
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// The small-jump stream of path `index`.
pub fn path_rng(seed: u64, index: u64) -> PathRng {
    stream(seed, lane::SMALL_JUMPS, index)
}

/// Derive a child seed, e.g. one per Monte-Carlo batch.
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag ^ 0x5851_F42D_4C95_7F2D))
}
