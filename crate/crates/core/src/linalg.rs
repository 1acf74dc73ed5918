//! Dense row-major matrices and the handful of products the sensing code
//! is built from.
//!
//! Storage is row-major (`data[i * cols + j]`), but vectorization follows
//! the column-major convention so that `vec(Phi X Psi^T) = (Psi ⊗ Phi) vec(X)`.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Default cap on the number of entries a materialized product may hold.
pub const DEFAULT_ELEMENT_BUDGET: usize = 1 << 26;

/// Environment variable overriding [`DEFAULT_ELEMENT_BUDGET`].
pub const ELEMENT_BUDGET_ENV: &str = "AKCS_ELEMENT_BUDGET";

/// The element budget in effect, honouring `AKCS_ELEMENT_BUDGET` when it
/// parses as a positive integer.
pub fn element_budget() -> usize {
    std::env::var(ELEMENT_BUDGET_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_ELEMENT_BUDGET)
}

pub(crate) fn check_budget(rows: usize, cols: usize, budget: usize) -> Result<()> {
    match rows.checked_mul(cols) {
        Some(n) if n <= budget => Ok(()),
        requested => Err(Error::SizeBudget {
            rows,
            cols,
            requested: requested.unwrap_or(usize::MAX),
            budget,
        }),
    }
}

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data. Rejects empty shapes and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "matrix constructor",
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Builds a matrix from row slices.
    ///
    /// # Panics
    /// Panics on ragged or empty input; intended for literals in tests and
    /// examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty(), "at least one row required");
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), cols, data).expect("valid literal matrix")
    }

    /// A single-row matrix.
    pub fn row_vector(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values.len(), values)
    }

    /// A single-column matrix.
    pub fn column_vector(values: Vec<f64>) -> Result<Self> {
        Self::new(values.len(), 1, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                expected: (self.cols, rhs.cols),
                actual: rhs.shape(),
            });
        }
        let (n, p) = (self.rows, rhs.cols);
        let mut out = vec![0.0; n * p];
        // i-k-j order keeps the inner loop contiguous in both operands.
        for i in 0..n {
            let out_row = &mut out[i * p..(i + 1) * p];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * p..(k + 1) * p];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseMatrix {
            rows: n,
            cols: p,
            data: out,
        })
    }

    /// `self^T * rhs` without forming the transpose.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::ShapeMismatch {
                op: "t_matmul",
                expected: (self.rows, rhs.cols),
                actual: rhs.shape(),
            });
        }
        let (n, p) = (self.cols, rhs.cols);
        let mut out = vec![0.0; n * p];
        for k in 0..self.rows {
            let lhs_row = self.row(k);
            let rhs_row = rhs.row(k);
            for (i, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out[i * p..(i + 1) * p].iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseMatrix {
            rows: n,
            cols: p,
            data: out,
        })
    }

    /// `self * rhs^T` without forming the transpose.
    pub fn matmul_t(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.cols {
            return Err(Error::ShapeMismatch {
                op: "matmul_t",
                expected: (rhs.rows, self.cols),
                actual: rhs.shape(),
            });
        }
        let (n, p) = (self.rows, rhs.rows);
        let mut out = vec![0.0; n * p];
        for i in 0..n {
            let a = self.row(i);
            for j in 0..p {
                out[i * p + j] = dot(a, rhs.row(j));
            }
        }
        Ok(DenseMatrix {
            rows: n,
            cols: p,
            data: out,
        })
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        DenseMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Kronecker product under the process-wide element budget.
    pub fn kron(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.kron_with_budget(rhs, element_budget())
    }

    /// Kronecker product: block `(i, j)` of the result is `self[i, j] * rhs`.
    pub fn kron_with_budget(&self, rhs: &DenseMatrix, budget: usize) -> Result<DenseMatrix> {
        let rows = self.rows * rhs.rows;
        let cols = self.cols * rhs.cols;
        check_budget(rows, cols, budget)?;
        let mut data = vec![0.0; rows * cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                for r in 0..rhs.rows {
                    let dst = (i * rhs.rows + r) * cols + j * rhs.cols;
                    for (d, &b) in data[dst..dst + rhs.cols].iter_mut().zip(rhs.row(r)) {
                        *d = a * b;
                    }
                }
            }
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Column-major vectorization as an `(rows*cols) x 1` matrix:
    /// `out[w * rows + h] = self[h, w]`.
    pub fn vec_cm(&self) -> DenseMatrix {
        let t = self.transpose();
        DenseMatrix {
            rows: self.data.len(),
            cols: 1,
            data: t.data,
        }
    }

    /// Inverse of [`vec_cm`](Self::vec_cm): reshapes a column-major vector
    /// into a `rows x cols` matrix.
    pub fn from_vec_cm(values: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
        if values.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                got: values.len(),
            });
        }
        DenseMatrix::from_fn(rows, cols, |h, w| values[w * rows + h])
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, &v) in sq.iter_mut().zip(self.row(i)) {
                *s += v * v;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    /// Scales every column to unit Euclidean norm.
    pub fn normalize_columns(&self) -> Result<DenseMatrix> {
        let norms = self.column_norms();
        if let Some(index) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::DegenerateColumn { index });
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (v, &n) in out.data[i * self.cols..(i + 1) * self.cols].iter_mut().zip(&norms) {
                *v /= n;
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `<self, rhs>`.
    pub fn inner(&self, rhs: &DenseMatrix) -> Result<f64> {
        self.require_same_shape(rhs, "inner")?;
        Ok(dot(&self.data, &rhs.data))
    }

    pub fn max_abs_diff(&self, rhs: &DenseMatrix) -> Result<f64> {
        self.require_same_shape(rhs, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn add(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    /// `self + alpha * rhs`.
    pub fn axpy(&self, alpha: f64, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(rhs, "axpy", |a, b| a + alpha * b)
    }

    pub fn scale(&self, alpha: f64) -> DenseMatrix {
        self.map(|v| alpha * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, rhs: &DenseMatrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
        self.require_same_shape(rhs, op)?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub(crate) fn require_same_shape(&self, rhs: &DenseMatrix, op: &'static str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::ShapeMismatch {
                op,
                expected: self.shape(),
                actual: rhs.shape(),
            });
        }
        Ok(())
    }

    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> DenseMatrix {
        debug_assert_eq!(data.len(), rows * cols);
        DenseMatrix { rows, cols, data }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for v in self.row(i).iter().take(8) {
                write!(f, "{v:>11.4e} ")?;
            }
            writeln!(f, "{}", if self.cols > 8 { "..." } else { "" })?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
