//! Reconstruction error and loss, per-group spectral summaries, and the
//! symmetric target matrices whose joint diagonalization yields fair PCA.
//!
//! For a group matrix `X` with `n` rows and an orthonormal `U` of rank `r`:
//!
//! ```text
//! R(U; X) = |X - X U U^T|_F^2 / n
//! L(U; X) = R(U; X) - R(U*; X)
//!         = Tr(U^T (1/n)[(1/r) sum_{k<=r} s_k^2 I - X^T X] U)
//! ```
//!
//! where `s_k` are the singular values of `X`. The target matrix of a group is
//! the negation of the bracketed matrix, so `Tr(U^T M U) = -L(U; X)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{orthonormality_defect, sym_eigen_desc, MatrixRef};

/// A `d x r` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    columns: DMatrix<f64>,
}

impl ProjectionMatrix {
    /// Maximum tolerated `|U^T U - I|_F`.
    pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-8;

    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        let (d, r) = columns.shape();
        if r == 0 || r > d {
            return Err(Error::InvalidRank {
                rank: r,
                dim: d,
                bound: "1 ≤ r ≤ d",
            });
        }
        let defect = orthonormality_defect(&columns);
        if !(defect <= Self::ORTHONORMALITY_TOLERANCE) {
            return Err(Error::NotOrthonormal(defect));
        }
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.columns
    }
}

fn check_columns(x: &DMatrix<f64>, d: usize) -> Result<()> {
    if x.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, projection has {} rows",
            x.ncols(),
            d
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::DimensionMismatch("data has no rows".into()));
    }
    Ok(())
}

pub(crate) fn check_rank(r: usize, d: usize) -> Result<()> {
    if r == 0 || r > d {
        return Err(Error::InvalidRank {
            rank: r,
            dim: d,
            bound: "1 ≤ r ≤ d",
        });
    }
    Ok(())
}

/// `Tr(U^T M U)` accumulated column by column.
pub fn trace_quadratic(m: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    u.column_iter().map(|c| c.dot(&(m * c))).sum()
}

/// Gram matrix, squared singular values and row count of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// `X^T X / n`.
    pub gram: DMatrix<f64>,
    /// Nonincreasing, length `min(n, d)`.
    pub singular_values_squared: Vec<f64>,
    pub group_size: usize,
}

impl SpectralSummary {
    /// Squared singular values come from the `d x d` eigenproblem of `X^T X`;
    /// round-off negatives are clamped to zero.
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = x.shape();
        if n == 0 || d == 0 {
            return Err(Error::DimensionMismatch("empty group matrix".into()));
        }
        let xtx = x.transpose() * x;
        let (values, _) = sym_eigen_desc(&xtx);
        let singular_values_squared = values.iter().take(n.min(d)).map(|&v| v.max(0.0)).collect();
        let mut gram = xtx / n as f64;
        gram.fill_lower_triangle_with_upper_triangle();
        Ok(Self {
            gram,
            singular_values_squared,
            group_size: n,
        })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    /// `sum_{k<=r} s_k^2`; ranks beyond `min(n, d)` add zeros.
    pub fn top_sum(&self, r: usize) -> f64 {
        self.singular_values_squared.iter().take(r).sum()
    }

    /// `Tr(X^T X)` recovered from the Gram matrix.
    pub fn total_energy(&self) -> f64 {
        self.gram.trace() * self.group_size as f64
    }
}

/// `|X - X U U^T|_F^2 / n`.
pub fn reconstruction_error(x: &DMatrix<f64>, u: &ProjectionMatrix) -> Result<f64> {
    check_columns(x, u.dim())?;
    let basis = u.columns();
    let residual = x - (x * basis) * basis.transpose();
    Ok(residual.norm_squared() / x.nrows() as f64)
}

/// Error of the best rank-`r` projection: `(Tr(X^T X) - sum_{k<=r} s_k^2) / n`.
pub fn optimal_error(x: &DMatrix<f64>, r: usize) -> Result<f64> {
    check_rank(r, x.ncols())?;
    let summary = SpectralSummary::new(x)?;
    Ok(optimal_error_from(&summary, r))
}

fn optimal_error_from(summary: &SpectralSummary, r: usize) -> f64 {
    let n = summary.group_size as f64;
    ((summary.total_energy() - summary.top_sum(r)) / n).max(0.0)
}

/// Excess reconstruction error of `u` over the optimal projection of the same rank.
pub fn reconstruction_loss(x: &DMatrix<f64>, u: &ProjectionMatrix) -> Result<f64> {
    let error = reconstruction_error(x, u)?;
    Ok(error - optimal_error(x, u.rank())?)
}

/// Reconstruction loss through the trace identity, using only `summary`.
pub fn loss_trace_form(
    x: &DMatrix<f64>,
    u: &ProjectionMatrix,
    summary: &SpectralSummary,
) -> Result<f64> {
    check_columns(x, u.dim())?;
    if summary.dim() != u.dim() || summary.group_size != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "summary is for a {}x{} group, data is {}x{}",
            summary.group_size,
            summary.dim(),
            x.nrows(),
            x.ncols()
        )));
    }
    let r = u.rank();
    let n = summary.group_size as f64;
    let shift = summary.top_sum(r) / (r as f64 * n);
    let mut inner = -summary.gram.clone();
    for i in 0..inner.nrows() {
        inner[(i, i)] += shift;
    }
    Ok(trace_quadratic(&inner, u.columns()))
}

/// `M_s = (1/n_s)[X_s^T X_s - (1/r) sum_{k<=r} s_k^2 I]` for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    pub m: DMatrix<f64>,
    pub group_label: usize,
    pub rank_used: usize,
}

impl MatrixRef for TargetMatrix {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

impl TargetMatrix {
    pub fn from_summary(summary: &SpectralSummary, r: usize, group_label: usize) -> Result<Self> {
        check_rank(r, summary.dim())?;
        if summary.group_size < 2 {
            return Err(Error::GroupTooSmall {
                group: group_label,
                rows: summary.group_size,
            });
        }
        let shift = summary.top_sum(r) / (r as f64 * summary.group_size as f64);
        let mut m = summary.gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] -= shift;
        }
        Ok(Self {
            m,
            group_label,
            rank_used: r,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

pub fn build_target_matrix(x_s: &DMatrix<f64>, r: usize, group_label: usize) -> Result<TargetMatrix> {
    check_rank(r, x_s.ncols())?;
    let summary = SpectralSummary::new(x_s)?;
    TargetMatrix::from_summary(&summary, r, group_label)
}
