//! Seeded, splittable noise streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream)`, so episode
//! `i` of a Monte Carlo sweep draws the same numbers regardless of how many
//! threads run the sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::Vector;

/// Stream ids reserved for the different consumers of randomness.
pub mod streams {
    /// Process and measurement noise of the environment.
    pub const ENVIRONMENT: u64 = 0;
    /// Exploratory actions of the warm-up phase.
    pub const EXPLORATION: u64 = 1;
    /// Monte Carlo oracles that are not tied to an environment.
    pub const ORACLE: u64 = 2;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive the seed of replication `index` from a master seed.
pub fn replication_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Gaussian noise source. `Zero` is a deterministic test mode where every
/// draw is exactly zero.
#[derive(Debug, Clone)]
pub enum Noise {
    Gaussian(ChaCha8Rng),
    Zero,
}

impl Noise {
    pub fn seeded(seed: u64, stream: u64) -> Self {
        Noise::Gaussian(stream_rng(seed, stream))
    }

    /// Standard normal vector of length `dim`.
    pub fn standard(&mut self, dim: usize) -> Vector {
        match self {
            Noise::Gaussian(rng) => Vector::from_fn(dim, |_, _| rng.sample(StandardNormal)),
            Noise::Zero => Vector::zeros(dim),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Noise::Zero)
    }
}
