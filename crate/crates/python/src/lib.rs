//! Python module `pyfscre`.

use fscre::experiment;
use fscre::metrics;
use fscre::pipeline::{self, PipelineConfig};
use fscre::{Dataset, EnsembleModel, FscreConfig, FscreError, Generator, Matrix, Scenario, SimConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: FscreError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(py_err)
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// A fitted ensemble of robust sub-models.
#[pyclass(name = "Model", module = "pyfscre", frozen)]
pub struct PyModel {
    inner: EnsembleModel,
    trace_length: usize,
}

#[pymethods]
impl PyModel {
    /// Fit on response `y` and row-major predictors `x`.
    #[staticmethod]
    #[pyo3(signature = (y, x, k = 10, tau = 0.01, folds = 5, intercept = true, seed = 0, impute = true))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        k: usize,
        tau: f64,
        folds: usize,
        intercept: bool,
        seed: u64,
        impute: bool,
    ) -> PyResult<Self> {
        let data = Dataset::new(y, matrix(x)?).map_err(py_err)?;
        let cfg = PipelineConfig {
            impute,
            ..PipelineConfig::new(FscreConfig {
                k,
                tau,
                cv_folds: folds,
                intercept,
                seed,
                ..FscreConfig::default()
            })
        };
        let out = py.detach(|| pipeline::fit(&data, &cfg)).map_err(py_err)?;
        Ok(Self {
            trace_length: out.selection.trace.len(),
            inner: out.model,
        })
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict(&matrix(x)?).map_err(py_err)
    }

    /// Selected predictor indices of each sub-model.
    #[getter]
    fn sets(&self) -> Vec<Vec<usize>> {
        self.inner.sets.clone()
    }

    /// Union of the sub-model sets, ascending.
    #[getter]
    fn selected(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.inner.sets.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    #[getter]
    fn coefficients(&self) -> Vec<Vec<f64>> {
        self.inner.fits.iter().map(|f| f.coefficients.clone()).collect()
    }

    #[getter]
    fn intercepts(&self) -> Vec<f64> {
        self.inner.fits.iter().map(|f| f.intercept).collect()
    }

    #[getter]
    fn trace_length(&self) -> usize {
        self.trace_length
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: EnsembleModel::from_json(text).map_err(py_err)?,
            trace_length: 0,
        })
    }

    fn __repr__(&self) -> String {
        format!("Model(k={}, selected={})", self.inner.k(), self.selected().len())
    }
}

/// Simulated `(y, x, beta, noise_sd)` for one contamination scenario.
#[pyfunction]
#[pyo3(signature = (n = 50, p = 20, sparsity = 4, snr = 3.0, block_size = 4, scenario = "clean", seed = 0))]
fn simulate(
    n: usize,
    p: usize,
    sparsity: usize,
    snr: f64,
    block_size: usize,
    scenario: &str,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>, f64)> {
    let sim = SimConfig { n, p, sparsity, snr, block_size, seed, ..SimConfig::default() };
    let sc: Scenario = scenario.parse().map_err(py_err)?;
    let gen = Generator::new(sim).map_err(py_err)?;
    let clean = gen.generate_clean();
    let data = gen.contaminate(&clean, &fscre::ContaminationSpec::standard(sc)).map_err(py_err)?;
    let truth = clean.truth.expect("simulated data carry truth");
    Ok((data.y, rows(&data.x), truth.beta, truth.noise_sd))
}

/// Imputed `[y, X]` rows and the 0/1 flag rows of replaced cells.
#[pyfunction]
fn impute(y: Vec<f64>, x: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<bool>>)> {
    let data = Dataset::new(y, matrix(x)?).map_err(py_err)?;
    let imp = pipeline::impute(&data, &PipelineConfig::default()).map_err(py_err)?;
    let flags = (0..imp.flags.rows())
        .map(|i| (0..imp.flags.cols()).map(|j| imp.flags.get(i, j)).collect())
        .collect();
    Ok((rows(&imp.z_imp), flags))
}

/// MM regression: `(coefficients, intercept, scale, converged)`.
#[pyfunction]
#[pyo3(signature = (x, y, intercept = true))]
fn mm_fit(x: Vec<Vec<f64>>, y: Vec<f64>, intercept: bool) -> PyResult<(Vec<f64>, f64, f64, bool)> {
    let f = fscre::mm_fit(&matrix(x)?, &y, intercept).map_err(py_err)?;
    Ok((f.coefficients, f.intercept, f.scale, f.converged))
}

#[pyfunction]
#[pyo3(signature = (y_true, y_hat, noise_var = 1.0))]
fn mspe(y_true: Vec<f64>, y_hat: Vec<f64>, noise_var: f64) -> PyResult<f64> {
    metrics::mspe(&y_true, &y_hat, noise_var).map_err(py_err)
}

/// `(recall, precision)`; precision is None for an empty selection.
#[pyfunction]
fn selection_scores(true_active: Vec<usize>, selected: Vec<usize>) -> PyResult<(f64, Option<f64>)> {
    metrics::selection_scores(&true_active, &selected).map_err(py_err)
}

#[pyfunction]
fn example_csv() -> &'static str {
    experiment::EXAMPLE_CSV
}

#[pymodule]
fn pyfscre(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(impute, m)?)?;
    m.add_function(wrap_pyfunction!(mm_fit, m)?)?;
    m.add_function(wrap_pyfunction!(mspe, m)?)?;
    m.add_function(wrap_pyfunction!(selection_scores, m)?)?;
    m.add_function(wrap_pyfunction!(example_csv, m)?)?;
    Ok(())
}
