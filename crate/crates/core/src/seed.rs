//! Seed splitting.
//!
//! A master seed is split into named sub-streams so that changing how one
//! stage consumes randomness never perturbs another stage. The rule is:
//!
//! ```text
//! sub_seed(master, name) = splitmix64(master ^ fnv1a64(name))
//! ```
//!
//! and the sub-stream is a ChaCha8 generator seeded from `sub_seed`.
//! Indexed streams (one per training seed, per meta epoch, ...) are derived
//! with [`SeedStream::child`], which applies the same rule to the decimal
//! index appended to the parent name.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere in the crate.
pub type Rng = ChaCha8Rng;

/// Standard stream names used by the harness.
pub mod streams {
    pub const GRAPH: &str = "graph";
    pub const REQUESTS: &str = "requests";
    pub const INIT: &str = "init";
    pub const ROLLOUT: &str = "rollout";
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A named position in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { seed: master }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive the named sub-stream.
    pub fn derive(&self, name: &str) -> SeedStream {
        SeedStream {
            seed: splitmix64(self.seed ^ fnv1a64(name.as_bytes())),
        }
    }

    /// Derive the `index`-th child of a named family, e.g. `("draw", 3)`.
    pub fn child(&self, name: &str, index: u64) -> SeedStream {
        self.derive(&format!("{name}/{index}"))
    }

    pub fn rng(&self) -> Rng {
        Rng::seed_from_u64(self.seed)
    }
}

/// Shorthand for `SeedStream::new(master).derive(name).rng()`.
pub fn sub_rng(master: u64, name: &str) -> Rng {
    SeedStream::new(master).derive(name).rng()
}
