//! Seed derivation.
//!
//! Everything random descends from one root seed. A stream is addressed by
//! a path of integers (batch element, step, variant group, ...) and its seed
//! is obtained by folding the path into the root with SplitMix64:
//!
//! ```text
//! s_0 = splitmix64(root)
//! s_i = splitmix64(s_{i-1} ^ splitmix64(path_i + 0x9E3779B97F4A7C15 * (i + 1)))
//! ```
//!
//! The resulting `u64` seeds a ChaCha8 generator. Streams are counter
//! addressed, so the noise drawn at a given step of a given batch element is
//! the same regardless of how many other streams were consumed before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use nalgebra::DVector;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().enumerate().fold(splitmix64(root), |acc, (i, &p)| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1))))
    })
}

pub fn stream(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}

pub fn standard_normal_vector<R: rand::Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)))
}

/// Stream tags used by the sampler.
pub mod tag {
    /// Initial latent at `t = T`.
    pub const INIT: u64 = u64::MAX;
    /// Prompt-variant groups in verification runs.
    pub const VARIANT: u64 = 0x5641_5249;
    /// Per-pair streams in benchmarks.
    pub const PAIR: u64 = 0x5041_4952;
    /// Search batch in verification and benchmark runs.
    pub const SEARCH: u64 = 0x5345_4152;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn paths_are_order_sensitive_and_stable() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        assert_ne!(derive_seed(7, &[0]), derive_seed(7, &[0, 0]));
    }

    #[test]
    fn streams_reproduce() {
        let a: u64 = stream(3, &[4, 5]).random();
        let b: u64 = stream(3, &[4, 5]).random();
        assert_eq!(a, b);
    }
}
