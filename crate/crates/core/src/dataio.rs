//! Tabular ingestion: CSV parsing, feature encoding, group assignment and centering.
//!
//! Every loaded dataset is centered with the global column mean over all rows,
//! so a single affine map applies to every group.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    #[default]
    Numeric,
    OneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    #[default]
    Error,
    DropRow,
}

/// How to turn a CSV file into a [`GroupedDataset`].
///
/// Columns absent from `encoding` are parsed as numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub sensitive_column: String,
    #[serde(default)]
    pub drop_columns: Vec<String>,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub encoding: BTreeMap<String, Encoding>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
}

impl DatasetConfig {
    pub fn new(path: impl Into<PathBuf>, sensitive_column: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            sensitive_column: sensitive_column.into(),
            drop_columns: Vec::new(),
            standardize: false,
            encoding: BTreeMap::new(),
            missing_policy: MissingPolicy::Error,
        }
    }

    /// Reads a JSON config. A relative `path` is resolved against the config's directory.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: DatasetConfig = serde_json::from_str(&text)?;
        if config.path.is_relative() {
            if let Some(dir) = path.parent() {
                config.path = dir.join(&config.path);
            }
        }
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.drop_columns.contains(&self.sensitive_column) {
            return Err(Error::InvalidConfig(format!(
                "sensitive column \"{}\" is also listed in drop_columns",
                self.sensitive_column
            )));
        }
        for column in self.encoding.keys() {
            if *column == self.sensitive_column || self.drop_columns.contains(column) {
                return Err(Error::InvalidConfig(format!(
                    "encoding given for non-feature column \"{column}\""
                )));
            }
        }
        Ok(())
    }
}

/// Centered feature matrix with a partition of its rows into `K >= 2` groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    features: DMatrix<f64>,
    group_labels: Vec<usize>,
    group_sizes: Vec<usize>,
    column_means: Vec<f64>,
    column_scales: Vec<f64>,
    feature_names: Vec<String>,
    group_names: Vec<String>,
}

impl GroupedDataset {
    /// Centers `raw` with its global column means (and scales to unit population
    /// variance when `standardize` is set) and attaches the row partition.
    pub fn from_raw(
        raw: DMatrix<f64>,
        group_labels: Vec<usize>,
        num_groups: usize,
        standardize: bool,
    ) -> Result<Self> {
        let feature_names = (0..raw.ncols()).map(|j| format!("x{j}")).collect();
        let group_names = (0..num_groups).map(|s| s.to_string()).collect();
        Self::from_raw_named(
            raw,
            group_labels,
            num_groups,
            standardize,
            feature_names,
            group_names,
        )
    }

    pub fn from_raw_named(
        raw: DMatrix<f64>,
        group_labels: Vec<usize>,
        num_groups: usize,
        standardize: bool,
        feature_names: Vec<String>,
        group_names: Vec<String>,
    ) -> Result<Self> {
        if group_labels.len() != raw.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} rows",
                group_labels.len(),
                raw.nrows()
            )));
        }
        if feature_names.len() != raw.ncols() || group_names.len() != num_groups {
            return Err(Error::DimensionMismatch(
                "feature or group names do not match the data shape".into(),
            ));
        }
        if raw.ncols() == 0 {
            return Err(Error::DimensionMismatch("dataset has no feature columns".into()));
        }
        if num_groups < 2 {
            return Err(Error::TooFewGroups(num_groups));
        }
        let group_sizes = count_groups(&group_labels, num_groups)?;
        for (group, &rows) in group_sizes.iter().enumerate() {
            if rows == 0 {
                return Err(Error::EmptyGroup(group));
            }
            if rows < 2 {
                return Err(Error::GroupTooSmall { group, rows });
            }
        }

        let (mut features, column_means) = center_columns(&raw);
        let mut column_scales = vec![1.0; raw.ncols()];
        if standardize {
            let n = raw.nrows() as f64;
            for (j, mut col) in features.column_iter_mut().enumerate() {
                let sd = (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
                if sd <= f64::EPSILON * column_means[j].abs().max(1.0) {
                    return Err(Error::ZeroVarianceColumn(feature_names[j].clone()));
                }
                col /= sd;
                column_scales[j] = sd;
            }
        }

        Ok(Self {
            features,
            group_labels,
            group_sizes,
            column_means,
            column_scales,
            feature_names,
            group_names,
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn group_labels(&self) -> &[usize] {
        &self.group_labels
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    pub fn column_scales(&self) -> &[f64] {
        &self.column_scales
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_groups(&self) -> usize {
        self.group_sizes.len()
    }

    /// Per-group submatrices in label order, rows in file order.
    pub fn split_groups(&self) -> Vec<DMatrix<f64>> {
        split_rows(&self.features, &self.group_labels, self.num_groups())
            .expect("dataset invariants guarantee a valid partition")
    }

    /// Undoes scaling and centering, recovering the encoded input cells.
    pub fn uncentered(&self) -> DMatrix<f64> {
        let mut raw = self.features.clone();
        for (j, mut col) in raw.column_iter_mut().enumerate() {
            col *= self.column_scales[j];
            col.add_scalar_mut(self.column_means[j]);
        }
        raw
    }

    /// Applies this dataset's stored means and scales to new raw rows.
    pub fn prepare(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        apply_affine(raw, &self.column_means, &self.column_scales)
    }
}

/// Subtracts `means` from and divides by `scales` column-wise.
pub fn apply_affine(raw: &DMatrix<f64>, means: &[f64], scales: &[f64]) -> Result<DMatrix<f64>> {
    if raw.ncols() != means.len() || raw.ncols() != scales.len() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, transform expects {}",
            raw.ncols(),
            means.len()
        )));
    }
    let mut out = raw.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
        col /= scales[j];
    }
    Ok(out)
}

/// Returns the column-centered matrix and the subtracted means.
pub fn center_columns(raw: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = raw.nrows().max(1) as f64;
    let mut centered = raw.clone();
    let mut means = Vec::with_capacity(raw.ncols());
    for mut col in centered.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n;
        col.add_scalar_mut(-mean);
        means.push(mean);
    }
    (centered, means)
}

fn count_groups(labels: &[usize], num_groups: usize) -> Result<Vec<usize>> {
    let mut sizes = vec![0usize; num_groups];
    for &label in labels {
        if label >= num_groups {
            return Err(Error::LabelOutOfRange {
                label,
                groups: num_groups,
            });
        }
        sizes[label] += 1;
    }
    Ok(sizes)
}

/// Partitions the rows of `features` by label. Fails if any of the `num_groups` groups is empty.
pub fn split_rows(
    features: &DMatrix<f64>,
    labels: &[usize],
    num_groups: usize,
) -> Result<Vec<DMatrix<f64>>> {
    if labels.len() != features.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            features.nrows()
        )));
    }
    let sizes = count_groups(labels, num_groups)?;
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyGroup(empty));
    }
    let mut rows_of: Vec<Vec<usize>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    for (i, &label) in labels.iter().enumerate() {
        rows_of[label].push(i);
    }
    Ok(rows_of
        .iter()
        .map(|rows| features.select_rows(rows.iter()))
        .collect())
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") || cell == "?"
}

/// Numbers sort numerically when every value parses, otherwise lexicographically.
fn sorted_distinct(values: impl Iterator<Item = String>) -> Vec<String> {
    let set: BTreeSet<String> = values.collect();
    let mut out: Vec<String> = set.into_iter().collect();
    let numeric: Option<Vec<f64>> = out.iter().map(|v| v.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(out).collect();
        paired.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        out = paired.into_iter().map(|(_, s)| s).collect();
    }
    out
}

enum FeatureSource {
    Numeric(usize),
    OneHot(usize, String),
}

/// Loads, encodes, groups and centers a CSV file.
pub fn load_dataset(config: &DatasetConfig) -> Result<GroupedDataset> {
    config.validate()?;
    let file = fs::File::open(&config.path).map_err(|e| Error::io(&config.path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let index_of = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    };

    let sensitive = index_of(&config.sensitive_column)?;
    let mut excluded = vec![sensitive];
    for name in &config.drop_columns {
        excluded.push(index_of(name)?);
    }
    for name in config.encoding.keys() {
        index_of(name)?;
    }
    let retained: Vec<usize> = (0..headers.len()).filter(|j| !excluded.contains(j)).collect();

    let mut records = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut complete = true;
        for &j in retained.iter().chain(std::iter::once(&sensitive)) {
            if is_missing(record.get(j).unwrap_or("")) {
                match config.missing_policy {
                    MissingPolicy::Error => {
                        return Err(Error::MissingValue {
                            column: headers[j].clone(),
                            row: row + 1,
                        })
                    }
                    MissingPolicy::DropRow => complete = false,
                }
            }
        }
        if complete {
            records.push((row + 1, record));
        }
    }

    let mut sources = Vec::new();
    let mut feature_names = Vec::new();
    for &j in &retained {
        match config.encoding.get(&headers[j]).copied().unwrap_or_default() {
            Encoding::Numeric => {
                sources.push(FeatureSource::Numeric(j));
                feature_names.push(headers[j].clone());
            }
            Encoding::OneHot => {
                let levels = sorted_distinct(records.iter().map(|(_, r)| r[j].to_owned()));
                for level in levels {
                    feature_names.push(format!("{}={}", headers[j], level));
                    sources.push(FeatureSource::OneHot(j, level));
                }
            }
        }
    }

    let group_names = sorted_distinct(records.iter().map(|(_, r)| r[sensitive].to_owned()));
    if group_names.len() < 2 {
        return Err(Error::TooFewGroups(group_names.len()));
    }

    let n = records.len();
    let mut raw = DMatrix::zeros(n, sources.len());
    let mut labels = Vec::with_capacity(n);
    for (i, (row, record)) in records.iter().enumerate() {
        for (k, source) in sources.iter().enumerate() {
            raw[(i, k)] = match source {
                FeatureSource::Numeric(j) => {
                    let cell = &record[*j];
                    match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => v,
                        _ => {
                            return Err(Error::NonNumeric {
                                column: headers[*j].clone(),
                                row: *row,
                                value: cell.to_owned(),
                            })
                        }
                    }
                }
                FeatureSource::OneHot(j, level) => f64::from(u8::from(record[*j] == *level)),
            };
        }
        let group = &record[sensitive];
        labels.push(group_names.iter().position(|g| g == group).expect("group seen during scan"));
    }

    let num_groups = group_names.len();
    GroupedDataset::from_raw_named(
        raw,
        labels,
        num_groups,
        config.standardize,
        feature_names,
        group_names,
    )
}

/// Writes raw rows plus a trailing group column in the format [`load_dataset`] reads.
pub fn write_grouped_csv(
    path: impl AsRef<Path>,
    raw: &DMatrix<f64>,
    labels: &[usize],
    feature_names: &[String],
    group_column: &str,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let header: Vec<&str> = feature_names
        .iter()
        .map(String::as_str)
        .chain(std::iter::once(group_column))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, label) in labels.iter().enumerate() {
        for j in 0..raw.ncols() {
            out.push_str(&format!("{:?},", raw[(i, j)]));
        }
        out.push_str(&format!("{label}\n"));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
