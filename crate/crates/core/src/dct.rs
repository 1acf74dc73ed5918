//! Orthonormal 2-D DCT (type II forward, type III inverse) applied as
//! separable basis-matrix products.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::Rng;

/// The `n x n` orthonormal DCT-II matrix, `C[k, i] = a_k cos(pi (2i+1) k / 2n)`.
pub fn dct_basis(n: usize) -> Result<DenseMatrix> {
    let nf = n as f64;
    DenseMatrix::from_fn(n, n, |k, i| {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        scale * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos()
    })
}

/// Precomputed bases for one image shape.
#[derive(Clone, Debug)]
pub struct DctPlan {
    rows: DenseMatrix,
    cols: DenseMatrix,
}

impl DctPlan {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            rows: dct_basis(height)?,
            cols: dct_basis(width)?,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.rows(), self.cols.rows())
    }

    fn check(&self, x: &DenseMatrix, op: &'static str) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::ShapeMismatch {
                op,
                expected: self.shape(),
                actual: x.shape(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check(x, "dct2")?;
        self.rows.matmul(x)?.matmul_t(&self.cols)
    }

    pub fn inverse(&self, coeffs: &DenseMatrix) -> Result<DenseMatrix> {
        self.check(coeffs, "idct2")?;
        self.rows.t_matmul(coeffs)?.matmul(&self.cols)
    }
}

pub fn dct2(x: &DenseMatrix) -> Result<DenseMatrix> {
    DctPlan::new(x.rows(), x.cols())?.forward(x)
}

pub fn idct2(coeffs: &DenseMatrix) -> Result<DenseMatrix> {
    DctPlan::new(coeffs.rows(), coeffs.cols())?.inverse(coeffs)
}

/// A synthetic image whose DCT has exactly `sparsity` non-DC coefficients
/// equal to `+-amplitude` (random signs, distinct random positions) and a DC
/// coefficient giving the image mean `mean`.
pub fn sparse_dct_image(
    height: usize,
    width: usize,
    sparsity: usize,
    amplitude: f64,
    mean: f64,
    rng: &mut Rng,
) -> Result<DenseMatrix> {
    let total = height * width;
    if sparsity >= total {
        return Err(Error::InvalidParameter(format!(
            "sparsity {sparsity} must be below the {} non-DC coefficients",
            total.saturating_sub(1)
        )));
    }
    let mut coeffs = DenseMatrix::zeros(height, width)?;
    coeffs.as_mut_slice()[0] = mean * (total as f64).sqrt();
    for idx in rng.distinct_indices(total - 1, sparsity) {
        let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        coeffs.as_mut_slice()[idx + 1] = sign * amplitude;
    }
    idct2(&coeffs)
}
