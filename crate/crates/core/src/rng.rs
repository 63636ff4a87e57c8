//! Named, reproducible random sub-streams.
//!
//! Every random draw in a run descends from one user seed. Components get
//! their own stream keyed by a name plus optional indices (epoch, batch, ...)
//! so that changing one component never perturbs the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream name and index path into a new seed.
pub fn derive_seed(base: u64, stream: &str, indices: &[u64]) -> u64 {
    // FNV-1a over the name
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    let mut s = splitmix64(base ^ splitmix64(h));
    for &i in indices {
        s = splitmix64(s ^ splitmix64(i.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    s
}

pub fn stream(base: u64, name: &str, indices: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(base, name, indices))
}
