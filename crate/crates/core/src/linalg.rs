//! Dense helpers shared by the spectral, JEVD and PCA code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Read access to a square matrix, implemented by plain matrices and target matrices.
pub trait MatrixRef {
    fn matrix(&self) -> &DMatrix<f64>;
}

impl MatrixRef for DMatrix<f64> {
    fn matrix(&self) -> &DMatrix<f64> {
        self
    }
}

/// Condition estimates at or above this are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

pub(crate) fn ensure_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Largest absolute difference between `m` and its transpose.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Rejects non-square input and matrices whose asymmetry exceeds `tol * max(1, |m|_max)`.
pub(crate) fn ensure_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    let d = ensure_square(m)?;
    let scale = m.amax().max(1.0);
    let asym = asymmetry(m);
    if asym > tol * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(d)
}

/// Symmetric eigendecomposition with eigenvalues sorted in nonincreasing order.
///
/// Ties keep the solver's original index order, so the result is deterministic.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Flips each column so that its largest-magnitude entry is positive (first index wins ties).
pub fn fix_column_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// `|U^T U - I|_F`.
pub fn orthonormality_defect(u: &DMatrix<f64>) -> f64 {
    let gram = u.transpose() * u;
    (gram - DMatrix::identity(u.ncols(), u.ncols())).norm()
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse together with the 1-norm condition estimate `|M|_1 |M^-1|_1`.
pub fn inverse_with_condition(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    ensure_square(m)?;
    let inv = match m.clone().lu().try_inverse() {
        Some(inv) => inv,
        None => return Err(Error::Singular(f64::INFINITY)),
    };
    let cond = one_norm(m) * one_norm(&inv);
    if !cond.is_finite() || cond >= SINGULAR_CONDITION {
        return Err(Error::Singular(cond));
    }
    Ok((inv, cond))
}

/// Orthonormal polar factor `W Z^T` of `U = W S Z^T`.
pub fn polar_factor(u: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = u.clone().svd(true, true);
    let w = svd.u.expect("left singular vectors requested");
    let zt = svd.v_t.expect("right singular vectors requested");
    w * zt
}

/// Largest principal angle (radians) between the column spans of two orthonormal bases.
///
/// Computed through `sin` of the angle so that small angles keep full precision.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.nrows(), b.nrows(), "bases must live in the same space");
    let residual = b - a * (a.transpose() * b);
    let sin = residual
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max)
        .min(1.0);
    sin.asin()
}

/// Sum of population variances of the columns of `x`.
pub fn total_variance(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / n;
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
        })
        .sum()
}
