//! Fair PCA through joint diagonalization of the per-group target matrices,
//! plus standard PCA behind the same interface.
//!
//! A fit builds one target matrix per group, solves the joint eigenproblem,
//! turns the eigenvector matrix into an orthonormal basis (unit columns, then
//! polar factor), and keeps the `r` basis columns chosen by a greedy min-max
//! rule over the per-group quadratic forms `q_j^T M_s q_j`. Summed over the
//! chosen columns those scores equal the negated group losses, so maximizing
//! the smallest sum minimizes the largest group loss.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataio::{apply_affine, GroupedDataset};
use crate::error::{Error, Result};
use crate::jevd::{jevd_solve, normalize_columns, orthonormalize, JevdConfig, JevdResult, JevdStatus};
use crate::linalg::{fix_column_signs, orthonormality_defect, sym_eigen_desc, MatrixRef};
use crate::spectra::{
    check_rank, loss_trace_form, reconstruction_loss, ProjectionMatrix,
    SpectralSummary, TargetMatrix,
};

/// Largest `d` accepted by the exhaustive subset oracle.
pub const ORACLE_MAX_DIM: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Jevd,
    Pca,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Jevd => "jevd",
            Method::Pca => "pca",
        }
    }
}

/// Anything that projects centered rows onto an orthonormal basis.
pub trait Projector {
    fn projection(&self) -> &ProjectionMatrix;
    fn method(&self) -> Method;

    fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        transform(self.projection(), x)
    }
}

/// `X U` for rows already centered with the model's preprocessing.
pub fn transform(projection: &ProjectionMatrix, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != projection.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, model expects {}",
            x.ncols(),
            projection.dim()
        )));
    }
    Ok(x * projection.columns())
}

/// Centering and naming metadata copied from the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub column_means: Vec<f64>,
    pub column_scales: Vec<f64>,
    pub feature_names: Vec<String>,
    pub group_names: Vec<String>,
}

impl Preprocessing {
    fn from_dataset(data: &GroupedDataset) -> Self {
        Self {
            column_means: data.column_means().to_vec(),
            column_scales: data.column_scales().to_vec(),
            feature_names: data.feature_names().to_vec(),
            group_names: data.group_names().to_vec(),
        }
    }

    /// Centers and scales raw rows like the training data.
    pub fn apply(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        apply_affine(raw, &self.column_means, &self.column_scales)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub status: JevdStatus,
    pub iterations: usize,
    pub final_objective: f64,
    /// `|U^T U - I|_F` of the raw solver output.
    pub orthonormality_defect: f64,
    /// Frobenius distance between the unit-column eigenvectors and their polar factor.
    pub polar_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairPcaModel {
    pub projection: ProjectionMatrix,
    pub full_basis: DMatrix<f64>,
    pub selected_columns: Vec<usize>,
    pub per_group_losses: Vec<f64>,
    /// `column_scores[s][j] = q_j^T M_s q_j`.
    pub column_scores: Vec<Vec<f64>>,
    pub rank: usize,
    pub config: JevdConfig,
    pub diagnostics: FitDiagnostics,
    pub preprocessing: Preprocessing,
}

impl FairPcaModel {
    pub fn loss_gap(&self) -> f64 {
        spread(&self.per_group_losses)
    }
}

impl Projector for FairPcaModel {
    fn projection(&self) -> &ProjectionMatrix {
        &self.projection
    }

    fn method(&self) -> Method {
        Method::Jevd
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub projection: ProjectionMatrix,
    /// Top-`r` covariance eigenvalues, nonincreasing.
    pub explained_spectrum: Vec<f64>,
    pub per_group_losses: Vec<f64>,
    pub preprocessing: Preprocessing,
}

impl Projector for PcaModel {
    fn projection(&self) -> &ProjectionMatrix {
        &self.projection
    }

    fn method(&self) -> Method {
        Method::Pca
    }
}

pub(crate) fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        0.0
    } else {
        max - min
    }
}

fn check_fair_rank(r: usize, d: usize) -> Result<()> {
    if r == 0 || r >= d {
        return Err(Error::InvalidRank {
            rank: r,
            dim: d,
            bound: "1 ≤ r < d",
        });
    }
    Ok(())
}

struct GroupSpectra {
    groups: Vec<DMatrix<f64>>,
    summaries: Vec<SpectralSummary>,
}

impl GroupSpectra {
    fn new(data: &GroupedDataset) -> Result<Self> {
        let groups = data.split_groups();
        let summaries = groups.iter().map(SpectralSummary::new).collect::<Result<Vec<_>>>()?;
        Ok(Self { groups, summaries })
    }

    fn targets(&self, r: usize) -> Result<Vec<TargetMatrix>> {
        self.summaries
            .iter()
            .enumerate()
            .map(|(s, summary)| TargetMatrix::from_summary(summary, r, s))
            .collect()
    }
}

/// Unit columns, polar factor, then the sign convention of [`fix_column_signs`].
fn basis_from_solve(result: &JevdResult) -> Result<(DMatrix<f64>, f64)> {
    let polar = orthonormalize(&normalize_columns(&result.eigenvectors))?;
    let mut basis = polar.basis;
    fix_column_signs(&mut basis);
    Ok((basis, polar.distance))
}

/// Per-group quadratic forms of every basis column.
pub fn column_scores<M: MatrixRef>(basis: &DMatrix<f64>, targets: &[M]) -> Vec<Vec<f64>> {
    targets
        .iter()
        .map(|t| {
            let m = t.matrix();
            basis.column_iter().map(|c| c.dot(&(m * c))).collect()
        })
        .collect()
}

pub const TIE_TOLERANCE: f64 = 1e-9;

/// Greedy min-max column selection on a score table `scores[group][column]`.
///
/// Each step adds the column that maximizes the smallest running group sum;
/// ties go to the larger total sum, then to the smaller index. Minimum sums
/// within `TIE_TOLERANCE` times the largest absolute score count as tied.
pub fn select_from_scores(scores: &[Vec<f64>], r: usize) -> Result<Vec<usize>> {
    let d = scores.first().map_or(0, Vec::len);
    if scores.iter().any(|row| row.len() != d) {
        return Err(Error::DimensionMismatch("ragged score table".into()));
    }
    check_rank(r, d)?;
    let scale = scores.iter().flatten().fold(0.0_f64, |a, b| a.max(b.abs()));
    let tie = TIE_TOLERANCE * scale * r as f64;
    let mut running = vec![0.0; scores.len()];
    let mut chosen = vec![false; d];
    let mut order = Vec::with_capacity(r);
    for _ in 0..r {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in (0..d).filter(|&j| !chosen[j]) {
            let mut worst = f64::INFINITY;
            let mut total = 0.0;
            for (row, acc) in scores.iter().zip(&running) {
                let value = acc + row[j];
                worst = worst.min(value);
                total += value;
            }
            let better = match best {
                None => true,
                Some((_, bw, bt)) => worst > bw + tie || ((worst - bw).abs() <= tie && total > bt),
            };
            if better {
                best = Some((j, worst, total));
            }
        }
        let (j, _, _) = best.expect("r <= d leaves a candidate");
        chosen[j] = true;
        order.push(j);
        for (row, acc) in scores.iter().zip(running.iter_mut()) {
            *acc += row[j];
        }
    }
    Ok(order)
}

/// Greedy min-max selection of `r` columns of an orthonormal basis.
pub fn select_columns<M: MatrixRef>(
    full_basis: &DMatrix<f64>,
    targets: &[M],
    r: usize,
) -> Result<Vec<usize>> {
    let defect = orthonormality_defect(full_basis);
    if !(defect <= ProjectionMatrix::ORTHONORMALITY_TOLERANCE) {
        return Err(Error::NotOrthonormal(defect));
    }
    select_from_scores(&column_scores(full_basis, targets), r)
}

fn assemble(
    spectra: &GroupSpectra,
    basis: &DMatrix<f64>,
    result: &JevdResult,
    polar_distance: f64,
    r: usize,
    config: &JevdConfig,
    preprocessing: Preprocessing,
) -> Result<FairPcaModel> {
    let targets = spectra.targets(r)?;
    let scores = column_scores(basis, &targets);
    let selected = select_from_scores(&scores, r)?;
    let projection = ProjectionMatrix::new(basis.select_columns(selected.iter()))?;
    let per_group_losses = spectra
        .groups
        .iter()
        .zip(&spectra.summaries)
        .map(|(x, summary)| loss_trace_form(x, &projection, summary))
        .collect::<Result<Vec<_>>>()?;
    Ok(FairPcaModel {
        projection,
        full_basis: basis.clone(),
        selected_columns: selected,
        per_group_losses,
        column_scores: scores,
        rank: r,
        config: config.clone(),
        diagnostics: FitDiagnostics {
            status: result.status,
            iterations: result.iterations,
            final_objective: result.final_objective(),
            orthonormality_defect: result.orthonormality_defect,
            polar_distance,
        },
        preprocessing,
    })
}

/// Fits a rank-`r` fair projection (`1 <= r < d`).
pub fn fit_fair_pca(data: &GroupedDataset, r: usize, config: &JevdConfig) -> Result<FairPcaModel> {
    check_fair_rank(r, data.d())?;
    let spectra = GroupSpectra::new(data)?;
    let result = jevd_solve(&spectra.targets(r)?, config)?;
    let (basis, distance) = basis_from_solve(&result)?;
    assemble(&spectra, &basis, &result, distance, r, config, Preprocessing::from_dataset(data))
}

/// Fits one model per rank from a single joint diagonalization.
///
/// The target matrices for different ranks differ by multiples of the
/// identity, which leave the conjugation iteration unchanged, so the solve at
/// the first requested rank serves all of them.
pub fn fit_fair_pca_sweep(
    data: &GroupedDataset,
    ranks: &[usize],
    config: &JevdConfig,
) -> Result<Vec<FairPcaModel>> {
    for &r in ranks {
        check_fair_rank(r, data.d())?;
    }
    let Some(&first) = ranks.first() else {
        return Ok(Vec::new());
    };
    let spectra = GroupSpectra::new(data)?;
    let result = jevd_solve(&spectra.targets(first)?, config)?;
    let (basis, distance) = basis_from_solve(&result)?;
    let preprocessing = Preprocessing::from_dataset(data);
    ranks
        .iter()
        .map(|&r| assemble(&spectra, &basis, &result, distance, r, config, preprocessing.clone()))
        .collect()
}

/// Top-`r` eigenvectors of the global covariance `X^T X / n`.
pub fn fit_standard_pca(data: &GroupedDataset, r: usize) -> Result<PcaModel> {
    check_rank(r, data.d())?;
    let x = data.features();
    let covariance = x.transpose() * x / data.n() as f64;
    let (values, mut vectors) = sym_eigen_desc(&covariance);
    fix_column_signs(&mut vectors);
    let projection = ProjectionMatrix::new(vectors.columns(0, r).into_owned())?;
    let spectra = GroupSpectra::new(data)?;
    let per_group_losses = spectra
        .groups
        .iter()
        .zip(&spectra.summaries)
        .map(|(g, summary)| loss_trace_form(g, &projection, summary))
        .collect::<Result<Vec<_>>>()?;
    Ok(PcaModel {
        projection,
        explained_spectrum: values.iter().take(r).cloned().collect(),
        per_group_losses,
        preprocessing: Preprocessing::from_dataset(data),
    })
}

/// Best column subset of a basis under the min-max loss criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxOracle {
    /// Ascending column indices.
    pub subset: Vec<usize>,
    pub losses: Vec<f64>,
    pub max_loss: f64,
}

fn next_combination(idx: &mut [usize], d: usize) -> bool {
    let r = idx.len();
    for i in (0..r).rev() {
        if idx[i] < d - r + i {
            idx[i] += 1;
            for k in (i + 1)..r {
                idx[k] = idx[k - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Enumerates every `r`-subset of the basis columns and keeps the one with
/// the smallest maximum group loss (first in lexicographic order on ties).
/// Losses come straight from the error difference, not the trace identity.
pub fn minmax_oracle_on_basis(
    basis: &DMatrix<f64>,
    groups: &[DMatrix<f64>],
    r: usize,
) -> Result<MinMaxOracle> {
    let d = basis.ncols();
    if d > ORACLE_MAX_DIM {
        return Err(Error::EnumerationTooLarge {
            dim: d,
            max: ORACLE_MAX_DIM,
        });
    }
    check_rank(r, d)?;
    let mut idx: Vec<usize> = (0..r).collect();
    let mut best: Option<MinMaxOracle> = None;
    loop {
        let projection = ProjectionMatrix::new(basis.select_columns(idx.iter()))?;
        let losses = groups
            .iter()
            .map(|g| reconstruction_loss(g, &projection))
            .collect::<Result<Vec<_>>>()?;
        let max_loss = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if best.as_ref().is_none_or(|b| max_loss < b.max_loss) {
            best = Some(MinMaxOracle {
                subset: idx.clone(),
                losses,
                max_loss,
            });
        }
        if !next_combination(&mut idx, d) {
            break;
        }
    }
    Ok(best.expect("at least one subset"))
}

/// Exhaustive min-max oracle over the fitted fair basis (`d <= 12`).
pub fn minmax_loss_oracle(data: &GroupedDataset, r: usize, config: &JevdConfig) -> Result<MinMaxOracle> {
    if data.d() > ORACLE_MAX_DIM {
        return Err(Error::EnumerationTooLarge {
            dim: data.d(),
            max: ORACLE_MAX_DIM,
        });
    }
    let model = fit_fair_pca(data, r, config)?;
    minmax_oracle_on_basis(&model.full_basis, &data.split_groups(), r)
}

/// Persisted form of either model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub method: Method,
    pub d: usize,
    pub r: usize,
    /// Column-major `d x r` entries.
    pub projection: Vec<f64>,
    pub selected_columns: Vec<usize>,
    pub column_means: Vec<f64>,
    pub column_scales: Vec<f64>,
    pub per_group_losses: Vec<f64>,
    pub status: Option<JevdStatus>,
    pub final_objective: Option<f64>,
    pub iterations: Option<usize>,
    pub orthonormality_defect: Option<f64>,
    pub polar_distance: Option<f64>,
    pub explained_spectrum: Option<Vec<f64>>,
    pub config: FitConfig,
    pub feature_names: Vec<String>,
    pub group_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub rank: usize,
    pub jevd: Option<JevdConfig>,
}

impl From<&FairPcaModel> for ModelDocument {
    fn from(model: &FairPcaModel) -> Self {
        let p = &model.preprocessing;
        Self {
            method: Method::Jevd,
            d: model.projection.dim(),
            r: model.rank,
            projection: model.projection.columns().as_slice().to_vec(),
            selected_columns: model.selected_columns.clone(),
            column_means: p.column_means.clone(),
            column_scales: p.column_scales.clone(),
            per_group_losses: model.per_group_losses.clone(),
            status: Some(model.diagnostics.status),
            final_objective: Some(model.diagnostics.final_objective),
            iterations: Some(model.diagnostics.iterations),
            orthonormality_defect: Some(model.diagnostics.orthonormality_defect),
            polar_distance: Some(model.diagnostics.polar_distance),
            explained_spectrum: None,
            config: FitConfig {
                rank: model.rank,
                jevd: Some(model.config.clone()),
            },
            feature_names: p.feature_names.clone(),
            group_names: p.group_names.clone(),
        }
    }
}

impl From<&PcaModel> for ModelDocument {
    fn from(model: &PcaModel) -> Self {
        let p = &model.preprocessing;
        let r = model.projection.rank();
        Self {
            method: Method::Pca,
            d: model.projection.dim(),
            r,
            projection: model.projection.columns().as_slice().to_vec(),
            selected_columns: (0..r).collect(),
            column_means: p.column_means.clone(),
            column_scales: p.column_scales.clone(),
            per_group_losses: model.per_group_losses.clone(),
            status: None,
            final_objective: None,
            iterations: None,
            orthonormality_defect: None,
            polar_distance: None,
            explained_spectrum: Some(model.explained_spectrum.clone()),
            config: FitConfig { rank: r, jevd: None },
            feature_names: p.feature_names.clone(),
            group_names: p.group_names.clone(),
        }
    }
}

impl ModelDocument {
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string_precise(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn into_model(self) -> Result<LoadedModel> {
        if self.projection.len() != self.d * self.r
            || self.column_means.len() != self.d
            || self.column_scales.len() != self.d
        {
            return Err(Error::DimensionMismatch(format!(
                "model document entries do not match d = {}, r = {}",
                self.d, self.r
            )));
        }
        let projection = ProjectionMatrix::new(DMatrix::from_column_slice(self.d, self.r, &self.projection))?;
        Ok(LoadedModel {
            projection,
            document: self,
        })
    }
}

/// A model read back from its JSON document.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub projection: ProjectionMatrix,
    pub document: ModelDocument,
}

impl Projector for LoadedModel {
    fn projection(&self) -> &ProjectionMatrix {
        &self.projection
    }

    fn method(&self) -> Method {
        self.document.method
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_picks_one_top_column_per_group() {
        let scores = vec![vec![3.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, 3.0, 2.0]];
        assert_eq!(select_from_scores(&scores, 2).unwrap(), vec![0, 2]);
    }

    #[test]
    fn rounding_level_ties_fall_to_total() {
        let scores = vec![vec![-2.3 - 3e-15, -2.4, 0.5, -0.5], vec![0.5, -0.5, -2.4, -2.3]];
        assert_eq!(select_from_scores(&scores, 2).unwrap(), vec![0, 2]);
    }

    #[test]
    fn greedy_stays_near_enumeration_on_random_tables() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(329);
        let mut worst_ratio = f64::INFINITY;
        for _ in 0..100 {
            let d = rng.random_range(2..=6);
            let k = rng.random_range(2..=3);
            let r = rng.random_range(1..d.min(4));
            let scores: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
            let min_sum = |subset: &[usize]| {
                scores
                    .iter()
                    .map(|row| subset.iter().map(|&j| row[j]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            };
            let greedy = min_sum(&select_from_scores(&scores, r).unwrap());
            let mut idx: Vec<usize> = (0..r).collect();
            let mut best = min_sum(&idx);
            while next_combination(&mut idx, d) {
                best = best.max(min_sum(&idx));
            }
            assert!(greedy <= best + 1e-12);
            worst_ratio = worst_ratio.min(greedy / best);
        }
        println!("worst greedy/optimum min-group score ratio {worst_ratio:.4}");
        assert!(worst_ratio >= 0.8, "{worst_ratio}");
    }

    #[test]
    fn single_group_is_top_r() {
        let scores = vec![vec![0.5, 4.0, -1.0, 2.0, 3.0]];
        assert_eq!(select_from_scores(&scores, 3).unwrap(), vec![1, 4, 3]);
    }

    #[test]
    fn selection_rejects_bad_rank() {
        let scores = vec![vec![1.0, 2.0]];
        assert!(select_from_scores(&scores, 0).is_err());
        assert!(select_from_scores(&scores, 3).is_err());
    }

    #[test]
    fn combinations_enumerate_all_subsets() {
        let mut idx = vec![0, 1];
        let mut seen = vec![idx.clone()];
        while next_combination(&mut idx, 4) {
            seen.push(idx.clone());
        }
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn standard_pca_small_example() {
        let raw = DMatrix::from_row_slice(4, 2, &[2.0, 0.0, 0.0, 1.0, -2.0, 0.0, 0.0, -1.0]);
        let data = GroupedDataset::from_raw(raw, vec![0, 0, 1, 1], 2, false).unwrap();
        let model = fit_standard_pca(&data, 1).unwrap();
        assert_eq!(model.projection.columns().as_slice(), &[1.0, 0.0]);
        assert!((model.explained_spectrum[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn fair_rank_bounds() {
        let raw = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let data = GroupedDataset::from_raw(raw, vec![0, 1, 0, 1, 0, 1], 2, false).unwrap();
        for r in [0, 3] {
            let err = fit_fair_pca(&data, r, &JevdConfig::default()).unwrap_err();
            assert!(err.to_string().starts_with("rank must satisfy 1 ≤ r < d"), "{err}");
        }
    }
}
