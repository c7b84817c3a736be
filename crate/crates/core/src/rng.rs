//! Seeded random streams.
//!
//! Every stochastic step draws from its own generator derived from a root
//! seed and a path of identifiers (run id, fold, variable, purpose tag), so
//! results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// A node in the stream derivation tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream(splitmix64(seed))
    }

    /// Child stream keyed by an integer (run id, fold, variable index...).
    pub fn child(self, id: u64) -> Self {
        Stream(splitmix64(self.0 ^ splitmix64(id.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Child stream keyed by a purpose tag.
    pub fn tagged(self, tag: &str) -> Self {
        self.child(fnv1a(tag))
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    pub fn key(self) -> u64 {
        self.0
    }
}
