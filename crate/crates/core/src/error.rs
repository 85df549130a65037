use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown column \"{0}\"")]
    UnknownColumn(String),

    #[error("non-numeric cell {value:?} in column \"{column}\" (data row {row})")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("missing value in column \"{column}\" (data row {row})")]
    MissingValue { column: String, row: usize },

    #[error("zero-variance column \"{0}\"")]
    ZeroVarianceColumn(String),

    #[error("empty group {0}")]
    EmptyGroup(usize),

    #[error("group {group} has {rows} row(s); at least 2 are required")]
    GroupTooSmall { group: usize, rows: usize },

    #[error("at least 2 groups are required, found {0}")]
    TooFewGroups(usize),

    #[error("group label {label} out of range for {groups} groups")]
    LabelOutOfRange { label: usize, groups: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank must satisfy {bound} (got r = {rank}, d = {dim})")]
    InvalidRank {
        rank: usize,
        dim: usize,
        bound: &'static str,
    },

    #[error("projection is not orthonormal (|U^T U - I|_F = {0:.3e})")]
    NotOrthonormal(f64),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is numerically singular (condition estimate {0:.3e})")]
    Singular(f64),

    #[error("solver abort: B_i is numerically singular at iteration {iteration} (condition estimate {condition:.3e})")]
    SingularUpdate { iteration: usize, condition: f64 },

    #[error("total variance of the data is zero")]
    ZeroTotalVariance,

    #[error("uniqueness condition violated: diagonal-difference rows of indices {0} and {1} are not distinct")]
    UniquenessViolated(usize, usize),

    #[error("subset enumeration supports d <= {max}, got d = {dim}")]
    EnumerationTooLarge { dim: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the iterative solver itself, as opposed to bad input.
    pub fn is_solver_abort(&self) -> bool {
        matches!(self, Error::SingularUpdate { .. })
    }
}
