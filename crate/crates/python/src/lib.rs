//! Python bindings. Matrices cross the boundary as lists of rows.

use ::jevdpca as core;
use core::nalgebra::DMatrix;
use core::{JevdConfig, ObjectiveTolerance, Projector};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(jevdpca, SolverAbort, PyRuntimeError);

fn to_py(err: core::Error) -> PyErr {
    if err.is_solver_abort() {
        SolverAbort::new_err(err.to_string())
    } else {
        PyValueError::new_err(err.to_string())
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn solver_config(max_iter: Option<usize>, tol: Option<f64>) -> JevdConfig {
    let mut config = JevdConfig::default();
    if let Some(n) = max_iter {
        config.max_iterations = n;
    }
    if let Some(eps) = tol {
        config.objective_tolerance = ObjectiveTolerance::Absolute(eps);
    }
    config
}

#[pyclass(name = "GroupedDataset", frozen)]
struct PyGroupedDataset {
    inner: core::GroupedDataset,
}

#[pymethods]
impl PyGroupedDataset {
    /// Centers the rows globally; `labels` are group indices `0..K`.
    #[new]
    #[pyo3(signature = (rows, labels, standardize = false))]
    fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, standardize: bool) -> PyResult<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let inner = core::GroupedDataset::from_raw(matrix(&rows)?, labels, k, standardize).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, sensitive_column = "group", standardize = false))]
    fn from_csv(path: &str, sensitive_column: &str, standardize: bool) -> PyResult<Self> {
        let mut config = core::DatasetConfig::new(path, sensitive_column);
        config.standardize = standardize;
        Ok(Self {
            inner: core::load_dataset(&config).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_config(path: &str) -> PyResult<Self> {
        let config = core::DatasetConfig::from_json_file(path).map_err(to_py)?;
        Ok(Self {
            inner: core::load_dataset(&config).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn num_groups(&self) -> usize {
        self.inner.num_groups()
    }

    #[getter]
    fn group_sizes(&self) -> Vec<usize> {
        self.inner.group_sizes().to_vec()
    }

    #[getter]
    fn group_names(&self) -> Vec<String> {
        self.inner.group_names().to_vec()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        rows(self.inner.features())
    }
}

#[pyclass(name = "FairPcaModel", frozen)]
struct PyFairPcaModel {
    inner: core::FairPcaModel,
}

#[pymethods]
impl PyFairPcaModel {
    #[getter]
    fn projection(&self) -> Vec<Vec<f64>> {
        rows(self.inner.projection.columns())
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank
    }

    #[getter]
    fn selected_columns(&self) -> Vec<usize> {
        self.inner.selected_columns.clone()
    }

    #[getter]
    fn per_group_losses(&self) -> Vec<f64> {
        self.inner.per_group_losses.clone()
    }

    #[getter]
    fn loss_gap(&self) -> f64 {
        self.inner.loss_gap()
    }

    #[getter]
    fn status(&self) -> String {
        self.inner.diagnostics.status.to_string()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.diagnostics.iterations
    }

    #[getter]
    fn final_objective(&self) -> f64 {
        self.inner.diagnostics.final_objective
    }

    /// Projects already centered rows.
    fn transform(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let z = core::fairpca::transform(&self.inner.projection, &matrix(&x)?).map_err(to_py)?;
        Ok(rows(&z))
    }

    fn to_json(&self) -> PyResult<String> {
        core::ModelDocument::from(&self.inner).to_json().map_err(to_py)
    }
}

#[pyclass(name = "PcaModel", frozen)]
struct PyPcaModel {
    inner: core::PcaModel,
}

#[pymethods]
impl PyPcaModel {
    #[getter]
    fn projection(&self) -> Vec<Vec<f64>> {
        rows(self.inner.projection.columns())
    }

    #[getter]
    fn explained_spectrum(&self) -> Vec<f64> {
        self.inner.explained_spectrum.clone()
    }

    #[getter]
    fn per_group_losses(&self) -> Vec<f64> {
        self.inner.per_group_losses.clone()
    }

    fn transform(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let z = core::fairpca::transform(&self.inner.projection, &matrix(&x)?).map_err(to_py)?;
        Ok(rows(&z))
    }

    fn to_json(&self) -> PyResult<String> {
        core::ModelDocument::from(&self.inner).to_json().map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (data, rank, max_iter = None, tol = None))]
fn fit_fair_pca(data: &PyGroupedDataset, rank: usize, max_iter: Option<usize>, tol: Option<f64>) -> PyResult<PyFairPcaModel> {
    let inner = core::fit_fair_pca(&data.inner, rank, &solver_config(max_iter, tol)).map_err(to_py)?;
    Ok(PyFairPcaModel { inner })
}

#[pyfunction]
fn fit_standard_pca(data: &PyGroupedDataset, rank: usize) -> PyResult<PyPcaModel> {
    let inner = core::fit_standard_pca(&data.inner, rank).map_err(to_py)?;
    Ok(PyPcaModel { inner })
}

type Report = (usize, f64, f64, f64, Vec<f64>, Vec<f64>);

fn report<P: Projector>(data: &PyGroupedDataset, model: &P) -> PyResult<Report> {
    let r = core::evaluate(&data.inner, model).map_err(to_py)?;
    Ok((
        r.rank,
        r.reconstruction_error_total,
        r.variance_explained,
        r.mmd_squared,
        r.per_group_errors,
        r.per_group_losses,
    ))
}

/// Returns `(rank, reconstruction_error, variance_explained, mmd_squared,
/// per_group_errors, per_group_losses)`.
#[pyfunction]
fn evaluate(data: &PyGroupedDataset, model: &Bound<'_, PyAny>) -> PyResult<Report> {
    if let Ok(m) = model.cast::<PyFairPcaModel>() {
        return report(data, &m.get().inner);
    }
    if let Ok(m) = model.cast::<PyPcaModel>() {
        return report(data, &m.get().inner);
    }
    Err(PyValueError::new_err("expected a FairPcaModel or PcaModel"))
}

type Solve = (Vec<Vec<f64>>, Vec<f64>, String, usize);

/// Returns `(eigenvectors, objective_trace, status, iterations)`.
#[pyfunction]
#[pyo3(signature = (matrices, max_iter = None, tol = None))]
fn jevd_solve(
    matrices: Vec<Vec<Vec<f64>>>,
    max_iter: Option<usize>,
    tol: Option<f64>,
) -> PyResult<Solve> {
    let targets = matrices.iter().map(|m| matrix(m)).collect::<PyResult<Vec<_>>>()?;
    let result = core::jevd_solve(&targets, &solver_config(max_iter, tol)).map_err(to_py)?;
    Ok((
        rows(&result.eigenvectors),
        result.objective_trace,
        result.status.to_string(),
        result.iterations,
    ))
}

#[pyfunction]
fn reconstruction_error(x: Vec<Vec<f64>>, projection: Vec<Vec<f64>>) -> PyResult<f64> {
    let u = core::ProjectionMatrix::new(matrix(&projection)?).map_err(to_py)?;
    core::reconstruction_error(&matrix(&x)?, &u).map_err(to_py)
}

#[pyfunction]
fn reconstruction_loss(x: Vec<Vec<f64>>, projection: Vec<Vec<f64>>) -> PyResult<f64> {
    let u = core::ProjectionMatrix::new(matrix(&projection)?).map_err(to_py)?;
    core::reconstruction_loss(&matrix(&x)?, &u).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "jevdpca")]
fn jevdpca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SolverAbort", m.py().get_type::<SolverAbort>())?;
    m.add_class::<PyGroupedDataset>()?;
    m.add_class::<PyFairPcaModel>()?;
    m.add_class::<PyPcaModel>()?;
    m.add_function(wrap_pyfunction!(fit_fair_pca, m)?)?;
    m.add_function(wrap_pyfunction!(fit_standard_pca, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(jevd_solve, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_error, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_loss, m)?)?;
    Ok(())
}
