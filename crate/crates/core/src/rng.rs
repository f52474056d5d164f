//! Counter-keyed random streams.
//!
//! Every stream is a ChaCha8 generator whose key is a hash of a lineage
//! tuple such as `(seed, path_index)` or `(seed, path_index, step, inner)`.
//! A path therefore draws the same increments no matter which worker runs it
//! or in which order paths are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::Vector;

/// Seed used when a configuration does not name one.
pub const DEFAULT_SEED: u64 = 20_240_917;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of a lineage tuple into a 256-bit ChaCha key.
fn derive_key(lineage: &[u64]) -> [u8; 32] {
    let mut state = 0x6a09_e667_f3bc_c908_u64 ^ lineage.len() as u64;
    for &word in lineage {
        state = splitmix64(state ^ splitmix64(word));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// A reproducible stream of standard normal draws.
#[derive(Clone, Debug)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(lineage: &[u64]) -> Self {
        Self { rng: ChaCha8Rng::from_seed(derive_key(lineage)) }
    }

    /// Stream for an outer path.
    pub fn for_path(seed: u64, path_index: u64) -> Self {
        Self::new(&[seed, path_index])
    }

    /// Stream for an inner (nested) path branching off an outer path at a
    /// grid step.
    pub fn for_inner(seed: u64, path_index: u64, outer_step: u64, inner_index: u64) -> Self {
        Self::new(&[seed, path_index, outer_step, inner_index, 0x1a2b])
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Brownian increment over a step of length `dt`: `n` independent
    /// centred normals with variance `dt`.
    #[inline]
    pub fn increment(&mut self, n: usize, dt: f64) -> Vector {
        let s = dt.sqrt();
        let mut v = Vector::zeros(n);
        for i in 0..n {
            v[i] = s * self.normal();
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_replay_and_separate() {
        let mut a = NormalStream::for_path(7, 3);
        let mut b = NormalStream::for_path(7, 3);
        let mut c = NormalStream::for_path(7, 4);
        let xa: Vec<f64> = (0..8).map(|_| a.normal()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.normal()).collect();
        let xc: Vec<f64> = (0..8).map(|_| c.normal()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        let mut i1 = NormalStream::for_inner(7, 3, 10, 0);
        let mut i2 = NormalStream::for_inner(7, 3, 11, 0);
        assert_ne!(i1.normal(), i2.normal());
    }

    #[test]
    fn moments_are_standard() {
        let mut s = NormalStream::for_path(1, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }
}
