//! Fair principal component analysis through joint eigenvalue decomposition.
//!
//! Each sensitive group gets a symmetric target matrix whose quadratic form is
//! the negated reconstruction loss of that group. Jointly diagonalizing the
//! targets gives one orthonormal basis shared by all groups, from which a
//! rank-`r` projection is selected to balance the group losses.
//!
//! The modules follow the pipeline: [`dataio`] loads and centers data,
//! [`spectra`] builds losses and target matrices, [`jevd`] solves the joint
//! eigenproblem, [`fairpca`] fits models, [`metrics`] evaluates them and
//! [`synth`] generates data with planted structure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataio;
pub mod error;
pub mod fairpca;
pub mod jevd;
pub mod json;
pub mod linalg;
pub mod metrics;
pub mod spectra;
pub mod synth;

pub use nalgebra;

pub use dataio::{load_dataset, DatasetConfig, Encoding, GroupedDataset, MissingPolicy};
pub use error::{Error, Result};
pub use fairpca::{
    fit_fair_pca, fit_fair_pca_sweep, fit_standard_pca, minmax_loss_oracle, select_columns,
    FairPcaModel, LoadedModel, Method, ModelDocument, PcaModel, Projector,
};
pub use jevd::{jevd_objective, jevd_solve, orthonormalize, zdiag, JevdConfig, JevdResult, JevdStatus, ObjectiveTolerance};
pub use metrics::{evaluate, mmd_squared, variance_explained, EvaluationReport};
pub use spectra::{
    build_target_matrix, loss_trace_form, optimal_error, reconstruction_error, reconstruction_loss,
    ProjectionMatrix, SpectralSummary, TargetMatrix,
};
