//! Approximate joint eigenvalue decomposition of `K` symmetric matrices.
//!
//! The solver looks for one invertible `U` such that every `U^-1 M_s U` is as
//! close to diagonal as possible, measured by
//!
//! ```text
//! C(U) = sum_s |ZDiag(U^-1 M_s U)|_F^2
//! ```
//!
//! Each iteration splits the current conjugated matrices into diagonal and
//! off-diagonal parts `T_s = L_s + O_s`, picks the zero-diagonal correction `V`
//! that minimizes the first-order expansion
//!
//! ```text
//! C_a(V) = sum_s |ZDiag(O_s - V L_s + L_s V)|_F^2
//! ```
//!
//! entry by entry, and applies the multiplicative update `B = I + V`:
//! `T_s <- B^-1 T_s B`, `U <- U B`. `B` is inverted exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_square, ensure_symmetric, inverse_with_condition, orthonormality_defect, MatrixRef,
    SINGULAR_CONDITION,
};

/// Stopping threshold on `C(U)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ObjectiveTolerance {
    Absolute(f64),
    /// Multiplied by `sum_s |M_s|_F^2`.
    Relative(f64),
}

impl ObjectiveTolerance {
    fn value(self) -> f64 {
        match self {
            ObjectiveTolerance::Absolute(v) | ObjectiveTolerance::Relative(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JevdConfig {
    pub max_iterations: usize,
    pub objective_tolerance: ObjectiveTolerance,
    /// Stop as stalled once `|C_prev - C| < stall_tolerance * C_prev`. Increases
    /// larger than that keep the iteration going.
    pub stall_tolerance: f64,
    /// Correction entries whose denominator falls below this are set to zero.
    pub degenerate_denominator_floor: f64,
    /// When false, the objective and stall tests are skipped and exactly
    /// `max_iterations` updates run.
    #[serde(default = "default_true")]
    pub convergence_checks: bool,
}

fn default_true() -> bool {
    true
}

impl Default for JevdConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            objective_tolerance: ObjectiveTolerance::Relative(1e-12),
            stall_tolerance: 1e-10,
            degenerate_denominator_floor: 1e-12,
            convergence_checks: true,
        }
    }
}

impl JevdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        let tol = self.objective_tolerance.value();
        for (name, v) in [
            ("objective_tolerance", tol),
            ("stall_tolerance", self.stall_tolerance),
            ("degenerate_denominator_floor", self.degenerate_denominator_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JevdStatus {
    Converged,
    MaxIterations,
    Stalled,
}

impl std::fmt::Display for JevdStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            JevdStatus::Converged => "converged",
            JevdStatus::MaxIterations => "max_iterations",
            JevdStatus::Stalled => "stalled",
        })
    }
}

/// Iterate of the solver: conjugated matrices, their split, and the accumulated `U`.
#[derive(Debug, Clone)]
pub struct JevdState {
    pub transformed: Vec<DMatrix<f64>>,
    pub diagonals: Vec<DVector<f64>>,
    pub offdiagonals: Vec<DMatrix<f64>>,
    pub accumulated: DMatrix<f64>,
    pub iteration: usize,
}

impl JevdState {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Self {
        let d = matrices.first().map_or(0, |m| m.nrows());
        let mut state = Self {
            transformed: matrices,
            diagonals: Vec::new(),
            offdiagonals: Vec::new(),
            accumulated: DMatrix::identity(d, d),
            iteration: 1,
        };
        state.split();
        state
    }

    fn split(&mut self) {
        self.diagonals = self.transformed.iter().map(|t| t.diagonal()).collect();
        self.offdiagonals = self.transformed.iter().map(zdiag_unchecked).collect();
    }

    pub fn dim(&self) -> usize {
        self.accumulated.nrows()
    }

    /// `C(U)` evaluated on the tracked conjugates.
    pub fn objective(&self) -> f64 {
        self.offdiagonals.iter().map(|o| o.norm_squared()).sum()
    }
}

fn zdiag_unchecked(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    out.fill_diagonal(0.0);
    out
}

/// Off-diagonal part of a square matrix.
pub fn zdiag(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(m)?;
    Ok(zdiag_unchecked(m))
}

/// `C(U) = sum_s |ZDiag(U^-1 M_s U)|_F^2`.
pub fn jevd_objective<M: MatrixRef>(u: &DMatrix<f64>, targets: &[M]) -> Result<f64> {
    let d = ensure_square(u)?;
    let (inv, _) = inverse_with_condition(u)?;
    let mut total = 0.0;
    for target in targets {
        let m = target.matrix();
        if m.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "target is {}x{}, U is {d}x{d}",
                m.nrows(),
                m.ncols()
            )));
        }
        total += zdiag_unchecked(&(&inv * m * u)).norm_squared();
    }
    Ok(total)
}

/// Zero-diagonal minimizer of the linearized criterion:
///
/// `V_mn = -sum_s O_s(mn) (L_s(m) - L_s(n)) / sum_s (L_s(m) - L_s(n))^2`.
pub fn correction_matrix(state: &JevdState, config: &JevdConfig) -> DMatrix<f64> {
    let d = state.dim();
    let mut v = DMatrix::zeros(d, d);
    for n in 0..d {
        for m in 0..d {
            if m == n {
                continue;
            }
            let mut numerator = 0.0;
            let mut denominator = 0.0;
            for (lambda, off) in state.diagonals.iter().zip(&state.offdiagonals) {
                let gap = lambda[m] - lambda[n];
                numerator += off[(m, n)] * gap;
                denominator += gap * gap;
            }
            if denominator >= config.degenerate_denominator_floor {
                v[(m, n)] = -numerator / denominator;
            }
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct JevdResult {
    pub eigenvectors: DMatrix<f64>,
    /// Diagonals of the final conjugated matrices, one vector per input.
    pub diagonals: Vec<DVector<f64>>,
    /// `C(U)` before each update and after the last one.
    pub objective_trace: Vec<f64>,
    pub status: JevdStatus,
    pub orthonormality_defect: f64,
    /// Number of multiplicative updates applied.
    pub iterations: usize,
}

impl JevdResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Runs the multiplicative-update iteration from `U = I`.
///
/// Stopping tests run in the order: objective threshold, stall, iteration cap.
pub fn jevd_solve<M: MatrixRef>(targets: &[M], config: &JevdConfig) -> Result<JevdResult> {
    config.validate()?;
    let first = targets
        .first()
        .ok_or_else(|| Error::InvalidConfig("at least one target matrix is required".into()))?;
    let d = ensure_square(first.matrix())?;
    let mut matrices = Vec::with_capacity(targets.len());
    for target in targets {
        let m = target.matrix();
        ensure_symmetric(m, 1e-10)?;
        if m.nrows() != d {
            return Err(Error::DimensionMismatch(format!(
                "targets have mixed sizes {d} and {}",
                m.nrows()
            )));
        }
        matrices.push(m.clone());
    }

    let threshold = match config.objective_tolerance {
        ObjectiveTolerance::Absolute(eps) => eps,
        ObjectiveTolerance::Relative(eps) => eps * matrices.iter().map(|m| m.norm_squared()).sum::<f64>(),
    };

    let mut state = JevdState::new(matrices);
    let mut trace: Vec<f64> = Vec::new();
    let status = loop {
        let objective = state.objective();
        let previous = trace.last().copied();
        trace.push(objective);
        if config.convergence_checks {
            if objective <= threshold {
                break JevdStatus::Converged;
            }
            if let Some(prev) = previous {
                if (prev - objective).abs() < config.stall_tolerance * prev {
                    break JevdStatus::Stalled;
                }
            }
        }
        if state.iteration > config.max_iterations {
            break JevdStatus::MaxIterations;
        }

        let mut b = correction_matrix(&state, config);
        for i in 0..d {
            b[(i, i)] = 1.0;
        }
        let b_inv = match inverse_with_condition(&b) {
            Ok((inv, _)) => inv,
            Err(Error::Singular(condition)) => {
                return Err(Error::SingularUpdate {
                    iteration: state.iteration,
                    condition,
                })
            }
            Err(e) => return Err(e),
        };
        for t in state.transformed.iter_mut() {
            *t = &b_inv * &*t * &b;
        }
        state.accumulated = &state.accumulated * &b;
        state.iteration += 1;
        state.split();
    };

    Ok(JevdResult {
        orthonormality_defect: orthonormality_defect(&state.accumulated),
        eigenvectors: state.accumulated,
        diagonals: state.diagonals,
        objective_trace: trace,
        status,
        iterations: state.iteration - 1,
    })
}

/// Closest orthonormal matrix in Frobenius norm, with its distance to the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Orthonormalized {
    pub basis: DMatrix<f64>,
    pub distance: f64,
}

pub fn orthonormalize(u: &DMatrix<f64>) -> Result<Orthonormalized> {
    ensure_square(u)?;
    let svd = u.clone().svd(true, true);
    let s = &svd.singular_values;
    let (hi, lo) = (s.max(), s.min());
    if !(lo > 0.0) || hi / lo >= SINGULAR_CONDITION {
        return Err(Error::Singular(hi / lo));
    }
    let basis = svd.u.expect("requested") * svd.v_t.expect("requested");
    let distance = (&basis - u).norm();
    Ok(Orthonormalized { basis, distance })
}

/// Scales every column to unit Euclidean norm.
pub fn normalize_columns(u: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = u.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    out
}
