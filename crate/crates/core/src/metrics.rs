//! Evaluation metrics: reconstruction error, variance explained and MMD².
//!
//! Variances are population variances (divide by `n`). MMD² is measured
//! between group means of the projected rows `X_s U`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::{split_rows, GroupedDataset};
use crate::error::{Error, Result};
use crate::fairpca::{spread, Projector};
use crate::linalg::total_variance;
use crate::spectra::{reconstruction_error, reconstruction_loss, ProjectionMatrix};

/// `Var(X U) / Var(X)`, each the sum of per-column variances.
pub fn variance_explained(x: &DMatrix<f64>, u: &ProjectionMatrix) -> Result<f64> {
    if x.ncols() != u.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, projection has {} rows",
            x.ncols(),
            u.dim()
        )));
    }
    let total = total_variance(x);
    if !(total > 0.0) {
        return Err(Error::ZeroTotalVariance);
    }
    Ok(total_variance(&(x * u.columns())) / total)
}

fn mean_row(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.iter().sum::<f64>() / n))
}

/// Squared distances between projected group means for every pair `s < t`.
pub fn mmd_squared_pairs(x: &DMatrix<f64>, labels: &[usize], u: &ProjectionMatrix) -> Result<Vec<f64>> {
    let num_groups = labels.iter().max().map_or(0, |m| m + 1);
    if num_groups < 2 {
        return Err(Error::TooFewGroups(num_groups));
    }
    if x.ncols() != u.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, projection has {} rows",
            x.ncols(),
            u.dim()
        )));
    }
    let means: Vec<DVector<f64>> = split_rows(x, labels, num_groups)?
        .iter()
        .map(|g| mean_row(&(g * u.columns())))
        .collect();
    let mut out = Vec::new();
    for s in 0..num_groups {
        for t in (s + 1)..num_groups {
            out.push((&means[s] - &means[t]).norm_squared());
        }
    }
    Ok(out)
}

/// `|mu_A - mu_B|^2` of the projected group means; the largest pairwise value when `K > 2`.
pub fn mmd_squared(x: &DMatrix<f64>, labels: &[usize], u: &ProjectionMatrix) -> Result<f64> {
    Ok(mmd_squared_pairs(x, labels, u)?.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rank: usize,
    pub method_name: String,
    pub reconstruction_error_total: f64,
    pub variance_explained: f64,
    pub mmd_squared: f64,
    pub per_group_errors: Vec<f64>,
    pub per_group_losses: Vec<f64>,
    pub loss_gap: f64,
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string_precise(self)
    }

    pub fn csv_header(num_groups: usize) -> String {
        let mut cols = vec!["method", "rank", "re_total", "ve", "mmd2", "loss_gap"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        for s in 0..num_groups {
            cols.push(format!("re_g{s}"));
        }
        for s in 0..num_groups {
            cols.push(format!("loss_g{s}"));
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.method_name.clone(),
            self.rank.to_string(),
            format!("{:?}", self.reconstruction_error_total),
            format!("{:?}", self.variance_explained),
            format!("{:?}", self.mmd_squared),
            format!("{:?}", self.loss_gap),
        ];
        cols.extend(self.per_group_errors.iter().map(|v| format!("{v:?}")));
        cols.extend(self.per_group_losses.iter().map(|v| format!("{v:?}")));
        cols.join(",")
    }

    /// Header plus one data row, newline terminated.
    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{}\n",
            Self::csv_header(self.per_group_errors.len()),
            self.csv_row()
        )
    }
}

/// Fills every report field for `model` on `data`.
pub fn evaluate(data: &GroupedDataset, model: &impl Projector) -> Result<EvaluationReport> {
    let u = model.projection();
    let x = data.features();
    if x.ncols() != u.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} features, model expects {}",
            x.ncols(),
            u.dim()
        )));
    }
    let groups = data.split_groups();
    let per_group_errors = groups
        .iter()
        .map(|g| reconstruction_error(g, u))
        .collect::<Result<Vec<_>>>()?;
    let per_group_losses = groups
        .iter()
        .map(|g| reconstruction_loss(g, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        rank: u.rank(),
        method_name: model.method().name().to_owned(),
        reconstruction_error_total: reconstruction_error(x, u)?,
        variance_explained: variance_explained(x, u)?,
        mmd_squared: mmd_squared(x, data.group_labels(), u)?,
        loss_gap: spread(&per_group_losses),
        per_group_errors,
        per_group_losses,
    })
}
