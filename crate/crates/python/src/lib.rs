//! Python bindings: cell problems, band structures, gaps, the dense solver
//! and the bundled experiments.

use gaplab::experiment::{catalog, find_entry, run, ExperimentConfig, RunOptions};
use gaplab::linalg::{solve_gevp, HermitianMatrix};
use gaplab::spectra::{band_structure, gap_condition, strip_spectrum};
use gaplab::{CellProblem, CurvatureProfile, EndCondition, Error, Resolution};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pygaplab, GaplabError, PyException);

fn to_py(err: Error) -> PyErr {
    if err.is_config() {
        PyValueError::new_err(format!("{}: {err}", err.name()))
    } else {
        GaplabError::new_err(format!("{}: {err}", err.name()))
    }
}

fn ends(theta_index: usize, theta_count: usize) -> PyResult<EndCondition> {
    if theta_count == 0 || theta_index >= theta_count {
        return Err(PyValueError::new_err("need 0 <= theta_index < theta_count"));
    }
    Ok(EndCondition::floquet(theta_index, theta_count))
}

/// Fourier curvature `κ(s) = Σ cos[k] cos(ks) + sin[k] sin(ks)`.
#[pyclass(name = "CurvatureProfile", module = "pygaplab", from_py_object)]
#[derive(Clone)]
struct PyCurvature {
    inner: CurvatureProfile,
}

#[pymethods]
impl PyCurvature {
    #[new]
    #[pyo3(signature = (cos = Vec::new(), sin = Vec::new()))]
    fn new(cos: Vec<f64>, sin: Vec<f64>) -> Self {
        Self {
            inner: CurvatureProfile::new(cos, sin),
        }
    }

    fn __call__(&self, s: f64) -> f64 {
        self.inner.eval(s)
    }
}

/// A periodicity cell: the one-dimensional operator or a curved strip.
#[pyclass(name = "CellProblem", module = "pygaplab")]
struct PyCell {
    inner: CellProblem,
}

#[pymethods]
impl PyCell {
    #[staticmethod]
    fn hill(kappa: &PyCurvature, cells_s: usize) -> Self {
        Self {
            inner: CellProblem::hill(kappa.inner.clone(), cells_s),
        }
    }

    #[staticmethod]
    fn waveguide(
        kappa: &PyCurvature,
        width: f64,
        cells_s: usize,
        cells_u: usize,
    ) -> PyResult<Self> {
        let inner = CellProblem::waveguide(&kappa.inner, width, Resolution { cells_s, cells_u })
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Lowest eigenvalues of the `θ = exp(2πi l / L)` realization.
    #[pyo3(signature = (count, theta_index = 0, theta_count = 1))]
    fn spectrum(
        &self,
        py: Python<'_>,
        count: usize,
        theta_index: usize,
        theta_count: usize,
    ) -> PyResult<Vec<f64>> {
        let ends = ends(theta_index, theta_count)?;
        py.detach(|| self.inner.spectrum(1, ends, count))
            .map(|s| s.values)
            .map_err(to_py)
    }

    /// Dict with `bands` as (lo, hi) pairs and the raw `table` per θ sample.
    fn band_structure<'py>(
        &self,
        py: Python<'py>,
        theta_count: usize,
        k_max: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let bs = py
            .detach(|| band_structure(&self.inner, theta_count, k_max))
            .map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("bands", bs.bands.clone())?;
        out.set_item("table", bs.table.clone())?;
        out.set_item(
            "gaps",
            bs.gaps
                .iter()
                .map(|g| (g.k, g.lower, g.upper))
                .collect::<Vec<_>>(),
        )?;
        out.set_item("csv", bs.to_csv())?;
        Ok(out)
    }

    /// Gaps `(k, lower, upper)` certified by the Dirichlet/Neumann values.
    fn gap_condition(&self, py: Python<'_>, k_max: usize) -> PyResult<Vec<(usize, f64, f64)>> {
        let gaps = py
            .detach(|| gap_condition(&self.inner, k_max))
            .map_err(to_py)?;
        Ok(gaps.iter().map(|g| (g.k, g.lower, g.upper)).collect())
    }
}

/// Lowest `count` eigenvalues of `A x = λ B x`; complex entries allowed.
#[pyfunction]
fn solve_gevp_values(
    a: Vec<Vec<Complex64>>,
    b: Vec<Vec<Complex64>>,
    count: usize,
) -> PyResult<Vec<f64>> {
    let dense = |m: &[Vec<Complex64>]| -> PyResult<HermitianMatrix> {
        let n = m.len();
        if m.iter().any(|row| row.len() != n) {
            return Err(PyValueError::new_err("matrices must be square"));
        }
        let entries = (0..n * n).map(|k| m[k % n][k / n]).collect();
        HermitianMatrix::from_column_major(n, entries).map_err(|e| to_py(e.into()))
    };
    let spectrum = solve_gevp(&dense(&a)?, &dense(&b)?, count).map_err(|e| to_py(e.into()))?;
    Ok(spectrum.values)
}

/// Strip eigenvalues with polynomial modes across the width.
#[pyfunction]
#[pyo3(signature = (kappa, width, cells_s, count, modes = 12, theta_index = 0, theta_count = 1))]
#[allow(clippy::too_many_arguments)]
fn strip_values(
    py: Python<'_>,
    kappa: &PyCurvature,
    width: f64,
    cells_s: usize,
    count: usize,
    modes: usize,
    theta_index: usize,
    theta_count: usize,
) -> PyResult<Vec<f64>> {
    let ends = ends(theta_index, theta_count)?;
    py.detach(|| strip_spectrum(&kappa.inner, width, cells_s, modes, ends, count))
        .map_err(to_py)
}

/// Names of the bundled experiments.
#[pyfunction]
fn experiments() -> Vec<&'static str> {
    catalog().iter().map(|e| e.name).collect()
}

/// Runs a bundled experiment by name, or a config given as TOML text.
/// Returns `(passed, report_json)`.
#[pyfunction]
#[pyo3(signature = (config, resolution_scale = 1.0))]
fn run_experiment(py: Python<'_>, config: &str, resolution_scale: f64) -> PyResult<(bool, String)> {
    let parsed = match find_entry(config) {
        Some(entry) => entry.config(),
        None => ExperimentConfig::from_toml(config),
    }
    .map_err(to_py)?;
    let outcome = py
        .detach(|| run(&parsed, &RunOptions { resolution_scale }))
        .map_err(to_py)?;
    Ok((outcome.passed(), outcome.report(&parsed.description)))
}

#[pymodule]
fn pygaplab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GaplabError", m.py().get_type::<GaplabError>())?;
    m.add_class::<PyCurvature>()?;
    m.add_class::<PyCell>()?;
    m.add_function(wrap_pyfunction!(solve_gevp_values, m)?)?;
    m.add_function(wrap_pyfunction!(strip_values, m)?)?;
    m.add_function(wrap_pyfunction!(experiments, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
