//! Sample matrices and the log-determinant volume of their manifold.
//!
//! A [`SampleMatrix`] stores one sample per column (`d x N`). The volume of a
//! centered matrix `X` is `0.5 * log2 det(I + X X^T / N)`, evaluated through a
//! Cholesky factorization of whichever regularized side is smaller.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FdgError, Result};

/// Absolute tolerance on per-dimension means of a centered matrix.
pub const CENTER_TOLERANCE: f64 = 1e-9;

/// A `d x N` real matrix, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    values: DMatrix<f64>,
    centered: bool,
}

impl SampleMatrix {
    /// Wraps a `d x N` matrix. Zero-column matrices are accepted so an empty
    /// augmentation can be expressed; `d` must be at least 1.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(FdgError::InvalidShape("dimension must be at least 1".into()));
        }
        for (col, column) in values.column_iter().enumerate() {
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(FdgError::NonFiniteInput { row, col });
            }
        }
        Ok(Self {
            values,
            centered: false,
        })
    }

    /// An empty `d x 0` matrix.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(dim, 0))
    }

    pub fn from_columns(dim: usize, columns: &[Vec<f64>]) -> Result<Self> {
        if let Some(bad) = columns.iter().find(|c| c.len() != dim) {
            return Err(FdgError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let flat: Vec<f64> = columns.iter().flatten().copied().collect();
        Self::from_sample_major(dim, columns.len(), flat)
    }

    /// Builds from a buffer holding sample 0's `d` values, then sample 1's, and so on.
    pub fn from_sample_major(dim: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * n {
            return Err(FdgError::InvalidShape(format!(
                "{} values cannot fill a {dim}x{n} matrix",
                data.len()
            )));
        }
        Self::new(DMatrix::from_vec(dim, n, data))
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Sample-major view of the data (column-major storage).
    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.values.as_slice()[j * d..(j + 1) * d]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let d = self.dim();
        self.values.as_slice().chunks_exact(d)
    }

    /// True when this matrix came out of [`center`].
    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn mean(&self) -> DVector<f64> {
        if self.is_empty() {
            return DVector::zeros(self.dim());
        }
        self.values.column_mean()
    }

    /// Columns of `self` followed by columns of `other`.
    pub fn concat(&self, other: &SampleMatrix) -> Result<SampleMatrix> {
        if self.dim() != other.dim() {
            return Err(FdgError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let mut data = Vec::with_capacity(self.as_slice().len() + other.as_slice().len());
        data.extend_from_slice(self.as_slice());
        data.extend_from_slice(other.as_slice());
        SampleMatrix::from_sample_major(self.dim(), self.len() + other.len(), data)
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> SampleMatrix {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &j in indices {
            data.extend_from_slice(self.column(j));
        }
        SampleMatrix {
            values: DMatrix::from_vec(d, indices.len(), data),
            centered: false,
        }
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<SampleMatrix> {
        let mut out = SampleMatrix::new(&self.values * factor)?;
        out.centered = self.centered;
        Ok(out)
    }

    fn max_abs_mean(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.values.column_mean().amax()
    }

    fn scale(&self) -> f64 {
        self.values.amax().max(1.0)
    }
}

/// Manifold volume in bits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Volume(f64);

impl Volume {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Which Gram-type matrix the log-determinant is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    /// `d x d` when `d <= N`, `N x N` otherwise.
    #[default]
    Auto,
    /// `I_d + X X^T / N`.
    Covariance,
    /// `I_N + X^T X / N`.
    Gram,
}

/// Subtracts each dimension's mean.
pub fn center(m: &SampleMatrix) -> SampleMatrix {
    let mut values = m.values.clone();
    if !m.is_empty() {
        // second pass removes the rounding residue of the first
        for _ in 0..2 {
            let mean = values.column_mean();
            for mut col in values.column_iter_mut() {
                col -= &mean;
            }
        }
    }
    SampleMatrix {
        values,
        centered: true,
    }
}

/// `0.5 * log2 det(I + X X^T / N)` of a centered matrix.
pub fn manifold_volume(m: &SampleMatrix) -> Result<Volume> {
    check_centered(m)?;
    regularized_volume(m)
}

/// The volume formula applied to `m` as given, without the centering check.
pub fn regularized_volume(m: &SampleMatrix) -> Result<Volume> {
    let logdet = regularized_logdet(m, Side::Auto)?;
    Ok(Volume((0.5 * logdet).max(0.0)))
}

/// `log2 det(I + X X^T / N)` of a centered matrix, on the cheaper side.
pub fn logdet_regularized_gram(m: &SampleMatrix) -> Result<f64> {
    logdet_regularized_gram_with(m, Side::Auto)
}

pub fn logdet_regularized_gram_with(m: &SampleMatrix, side: Side) -> Result<f64> {
    check_centered(m)?;
    regularized_logdet(m, side)
}

fn regularized_logdet(m: &SampleMatrix, side: Side) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    let n = m.len() as f64;
    let x = &m.values;
    let use_cov = match side {
        Side::Auto => m.dim() <= m.len(),
        Side::Covariance => true,
        Side::Gram => false,
    };
    let (mut s, label) = if use_cov {
        (x * x.transpose(), "covariance")
    } else {
        (x.transpose() * x, "gram")
    };
    s /= n;
    for i in 0..s.nrows() {
        s[(i, i)] += 1.0;
    }
    let chol = Cholesky::new(s).ok_or(FdgError::NumericalFailure { side: label })?;
    let l = chol.l_dirty();
    let mut ln_det = 0.0;
    for i in 0..l.nrows() {
        ln_det += l[(i, i)].ln();
    }
    Ok(2.0 * ln_det / std::f64::consts::LN_2)
}

/// Centers and measures in one step.
pub fn centered_volume(m: &SampleMatrix) -> Result<Volume> {
    manifold_volume(&center(m))
}

fn check_centered(m: &SampleMatrix) -> Result<()> {
    let max_abs_mean = m.max_abs_mean();
    if !m.centered || max_abs_mean > CENTER_TOLERANCE * m.scale() {
        return Err(FdgError::NotCentered { max_abs_mean });
    }
    Ok(())
}
