//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed, so a given
//! seed yields the same samples on every platform. Parallel work derives a
//! child seed per task from `(base seed, indices...)` instead of sharing a
//! generator, which keeps results independent of thread scheduling.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A stream for task `path` under `base`; see [`derive_seed`].
    pub fn for_task(base: u64, path: &[u64]) -> Self {
        Self::new(derive_seed(base, path))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform sample in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: usize) -> usize {
        self.inner.random_range(0..bound)
    }

    /// `count` distinct indices from `0..n` (partial Fisher-Yates).
    pub fn distinct_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        let count = count.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of task indices into a child seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &idx| {
        splitmix64(acc ^ splitmix64(idx.wrapping_add(0xA5A5_A5A5)))
    })
}

/// A `rows x cols` matrix of i.i.d. standard normal entries, filled in
/// row-major order from `rng`.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimension { rows, cols });
    }
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    DenseMatrix::new(rows, cols, data)
}
