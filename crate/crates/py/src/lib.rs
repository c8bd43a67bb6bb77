use std::collections::BTreeMap;

use pyo3::exceptions::{PyOverflowError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fpt_moments::deadtime::{output_distribution, CounterParams};
use fpt_moments::moments::{self, MomentSummary, Relation};
use fpt_moments::{montecarlo, report, tables};
use fpt_moments::{ElasticThreshold, Error, FellerParams, Model, OuParams, WienerParams};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Overflow { .. } => PyOverflowError::new_err(e.to_string()),
        Error::Domain { .. }
        | Error::InvalidParameter { .. }
        | Error::AlphaZero(_)
        | Error::InvalidBoundary(_)
        | Error::NonIntegrable { .. }
        | Error::Config(_)
        | Error::Reference(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A Wiener, OU or Feller model on `[nu, +inf)`.
#[pyclass(name = "Model", frozen, module = "fpt_moments")]
struct PyModel(Model);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn wiener(mu: f64, sigma2: f64, nu: f64) -> PyResult<Self> {
        Ok(Self(Model::Wiener(WienerParams::new(mu, sigma2, nu).map_err(to_py)?)))
    }

    #[staticmethod]
    fn ou(theta: f64, rho: f64, sigma2: f64, nu: f64) -> PyResult<Self> {
        Ok(Self(Model::Ou(OuParams::new(theta, rho, sigma2, nu).map_err(to_py)?)))
    }

    #[staticmethod]
    fn feller(theta: f64, rho: f64, xi: f64, nu: f64) -> PyResult<Self> {
        Ok(Self(Model::Feller(FellerParams::new(theta, rho, xi, nu).map_err(to_py)?)))
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    /// Lower boundary classification.
    #[getter]
    fn lower_boundary(&self) -> String {
        self.0.spec().classify_lower_boundary().to_string()
    }

    /// Closed-form or series FPT mean.
    fn fpt_mean(&self, s: f64, x: f64) -> PyResult<f64> {
        self.0.fpt_mean(s, x).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Model.{}({})", self.0.name(), fpt_moments::config::describe_model(&self.0))
    }
}

/// Threshold `S` reflecting with probability `p_R = beta/(alpha+beta)`.
#[pyclass(name = "ElasticThreshold", frozen, module = "fpt_moments")]
struct PyThreshold(ElasticThreshold);

#[pymethods]
impl PyThreshold {
    #[new]
    fn new(s: f64, p_r: f64) -> PyResult<Self> {
        Ok(Self(ElasticThreshold::from_reflecting_probability(s, p_r).map_err(to_py)?))
    }

    #[getter]
    fn s(&self) -> f64 {
        self.0.s
    }

    #[getter]
    fn p_r(&self) -> f64 {
        self.0.reflecting_probability()
    }

    /// `beta / alpha`.
    #[getter]
    fn ratio(&self) -> f64 {
        self.0.ratio()
    }
}

#[pyclass(name = "MomentSummary", frozen, module = "fpt_moments")]
struct PySummary(MomentSummary);

#[pymethods]
impl PySummary {
    #[getter]
    fn t1(&self) -> f64 {
        self.0.t1
    }
    #[getter]
    fn t2(&self) -> f64 {
        self.0.t2
    }
    #[getter]
    fn fpt_variance(&self) -> f64 {
        self.0.fpt_variance
    }
    #[getter]
    fn fet_t1(&self) -> f64 {
        self.0.fet_t1
    }
    #[getter]
    fn fet_variance(&self) -> f64 {
        self.0.fet_variance
    }
    #[getter]
    fn refractory_mean(&self) -> f64 {
        self.0.refractory_mean
    }
    #[getter]
    fn refractory_variance(&self) -> f64 {
        self.0.refractory_variance
    }
    #[getter]
    fn residuals(&self) -> BTreeMap<String, f64> {
        self.0.identity_residuals.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "MomentSummary(t1={}, V={}, E_Tr={}, V_Tr={})",
            report::format_sig7(self.0.t1),
            report::format_sig7(self.0.fpt_variance),
            report::format_sig7(self.0.refractory_mean),
            report::format_sig7(self.0.refractory_variance)
        )
    }
}

const TOL: f64 = 1e-10;

#[pyfunction]
#[pyo3(signature = (model, s, x, n=1, tol=TOL))]
fn fpt_moment(model: &PyModel, s: f64, x: f64, n: usize, tol: f64) -> PyResult<f64> {
    moments::fpt_moment(&model.0.spec(), s, x, n, tol).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (model, s, x, tol=TOL))]
fn fpt_variance(model: &PyModel, s: f64, x: f64, tol: f64) -> PyResult<f64> {
    moments::fpt_variance(&model.0.spec(), s, x, tol).map_err(to_py)
}

/// Elastic first-exit moment; `variant` 1 or 2 selects a binomial relation
/// with FPT moments instead of the direct recursion.
#[pyfunction]
#[pyo3(signature = (model, threshold, x, n=1, tol=TOL, variant=None))]
fn fet_moment(
    model: &PyModel,
    threshold: &PyThreshold,
    x: f64,
    n: usize,
    tol: f64,
    variant: Option<u8>,
) -> PyResult<f64> {
    let spec = model.0.spec();
    match variant {
        None => moments::fet_moment(&spec, &threshold.0, x, n, tol),
        Some(v) => Relation::try_from(v)
            .and_then(|r| moments::fet_moment_via_relation(&spec, &threshold.0, x, n, tol, r)),
    }
    .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (model, threshold, n=1, tol=TOL))]
fn refractory_moment(model: &PyModel, threshold: &PyThreshold, n: usize, tol: f64) -> PyResult<f64> {
    moments::refractory_moment(&model.0.spec(), &threshold.0, n, tol).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (model, threshold, tol=TOL))]
fn refractory_variance(model: &PyModel, threshold: &PyThreshold, tol: f64) -> PyResult<f64> {
    moments::refractory_variance(&model.0.spec(), &threshold.0, tol).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (model, threshold, x, tol=TOL))]
fn summary(model: &PyModel, threshold: &PyThreshold, x: f64, tol: f64) -> PyResult<PySummary> {
    moments::summary(&model.0.spec(), &threshold.0, x, tol)
        .map(PySummary)
        .map_err(to_py)
}

/// Recomputes reference table `id`; returns `(passed, rows)` with one
/// `(cell, computed, reference, rel_error)` tuple per cell.
#[pyfunction]
#[pyo3(signature = (id, tol=1e-5))]
fn table(py: Python<'_>, id: u8, tol: f64) -> PyResult<(bool, Vec<(String, f64, f64, f64)>)> {
    let r = py.detach(|| tables::table_report(id, tol)).map_err(to_py)?;
    let rows = r
        .rows
        .iter()
        .map(|c| (c.cell.clone(), c.computed, c.reference, c.rel_error))
        .collect();
    Ok((r.passed(), rows))
}

/// Output-count pmf `[Π_0, Π_1, ...]` of the dead-time counter.
#[pyfunction]
#[pyo3(signature = (lam, t, tau))]
fn counter_pmf(lam: f64, t: f64, tau: f64) -> PyResult<Vec<f64>> {
    let p = CounterParams::new(lam, t, tau).map_err(to_py)?;
    Ok(output_distribution(&p).map_err(to_py)?.pmf)
}

#[pyfunction]
#[pyo3(signature = (lam, t, tau, n_windows, seed=1))]
fn simulate_counter(py: Python<'_>, lam: f64, t: f64, tau: f64, n_windows: usize, seed: u64) -> PyResult<Vec<f64>> {
    let p = CounterParams::new(lam, t, tau).map_err(to_py)?;
    py.detach(|| montecarlo::simulate_counter(&p, n_windows, seed))
        .map(|s| s.pmf)
        .map_err(to_py)
}

/// Euler–Maruyama FPT sample; returns `(mean, std_error)`.
#[pyfunction]
#[pyo3(signature = (model, s, x, n_samples, dt, seed=1))]
fn simulate_fpt(
    py: Python<'_>,
    model: &PyModel,
    s: f64,
    x: f64,
    n_samples: usize,
    dt: f64,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let spec = model.0.spec();
    py.detach(|| montecarlo::simulate_fpt(&spec, s, x, n_samples, dt, seed))
        .map(|st| (st.mean, st.std_error))
        .map_err(to_py)
}

#[pyfunction]
fn format_sig7(v: f64) -> String {
    report::format_sig7(v)
}

#[pymodule]
#[pyo3(name = "fpt_moments")]
fn fpt_moments_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyThreshold>()?;
    m.add_class::<PySummary>()?;
    m.add_function(wrap_pyfunction!(fpt_moment, m)?)?;
    m.add_function(wrap_pyfunction!(fpt_variance, m)?)?;
    m.add_function(wrap_pyfunction!(fet_moment, m)?)?;
    m.add_function(wrap_pyfunction!(refractory_moment, m)?)?;
    m.add_function(wrap_pyfunction!(refractory_variance, m)?)?;
    m.add_function(wrap_pyfunction!(summary, m)?)?;
    m.add_function(wrap_pyfunction!(table, m)?)?;
    m.add_function(wrap_pyfunction!(counter_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_counter, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_fpt, m)?)?;
    m.add_function(wrap_pyfunction!(format_sig7, m)?)?;
    Ok(())
}
