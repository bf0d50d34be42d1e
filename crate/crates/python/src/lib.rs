//! Python bindings: knob spaces, the analytic surrogate, the GP and
//! acquisition primitives, strategy runs and report helpers.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use knobtune::campaign::{self, CampaignConfig};
use knobtune::constraint::{self, ErrorInjector};
use knobtune::knobspace::{self, Configuration};
use knobtune::optimizers::{self, Backend, HistoryEntry, Strategy};
use knobtune::target::{ExternalTarget, SurrogateSpec, SurrogateTarget as CoreSurrogate, Target};
use knobtune::{acquisition, gp, report, transcript, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Settings(_) | Error::Toml(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn evaluation_dict<'py>(py: Python<'py>, r: &knobtune::target::EvaluationResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("exec_time", r.exec_time)?;
    d.set_item("rmsd_p75", r.rmsd_p75)?;
    d.set_item("objective", r.objective)?;
    d.set_item("feasible", r.feasible)?;
    d.set_item("wall_clock", r.wall_clock)?;
    Ok(d)
}

#[pyclass(name = "KnobSpace", from_py_object)]
#[derive(Clone)]
struct PyKnobSpace {
    inner: knobspace::KnobSpace,
}

#[pymethods]
impl PyKnobSpace {
    /// The built-in eight-knob docking space.
    #[staticmethod]
    fn ligen8() -> Self {
        Self {
            inner: knobspace::KnobSpace::ligen8(),
        }
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let inner = knobspace::KnobSpace::from_file(std::path::Path::new(path)).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.knobs().iter().map(|k| k.name.clone()).collect()
    }

    #[getter]
    fn bounds(&self) -> Vec<(i64, i64)> {
        self.inner.knobs().iter().map(|k| (k.lower, k.upper)).collect()
    }

    #[getter]
    fn quality_knobs(&self) -> Vec<String> {
        self.inner
            .knobs()
            .iter()
            .filter(|k| k.affects_quality)
            .map(|k| k.name.clone())
            .collect()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn cardinality(&self) -> u128 {
        self.inner.cardinality()
    }

    fn normalize(&self, values: Vec<i64>) -> PyResult<Vec<f64>> {
        self.inner.normalize(&Configuration(values)).map_err(py_err)
    }

    fn denormalize(&self, u: Vec<f64>) -> PyResult<Vec<i64>> {
        Ok(self.inner.denormalize_round(&u).map_err(py_err)?.0)
    }

    fn quality_key(&self, values: Vec<i64>) -> PyResult<String> {
        let x = Configuration(values);
        self.inner.validate(&x).map_err(py_err)?;
        Ok(self.inner.quality_key(&x).0)
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }

    fn __repr__(&self) -> String {
        format!("KnobSpace({})", self.names().join(", "))
    }
}

#[pyclass(name = "SurrogateTarget")]
struct PySurrogateTarget {
    inner: Arc<CoreSurrogate>,
}

#[pymethods]
impl PySurrogateTarget {
    #[new]
    #[pyo3(signature = (space=None, rmsd_max=2.1))]
    fn new(space: Option<PyKnobSpace>, rmsd_max: f64) -> PyResult<Self> {
        let space = space.map_or_else(knobspace::KnobSpace::ligen8, |s| s.inner);
        let spec = SurrogateSpec {
            rmsd_max,
            ..SurrogateSpec::default()
        };
        Ok(Self {
            inner: Arc::new(CoreSurrogate::new(space, spec).map_err(py_err)?),
        })
    }

    fn evaluate<'py>(&self, py: Python<'py>, values: Vec<i64>) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.evaluate(&Configuration(values)).map_err(py_err)?;
        evaluation_dict(py, &r)
    }

    #[getter]
    fn space(&self) -> PyKnobSpace {
        PyKnobSpace {
            inner: self.inner.space().clone(),
        }
    }

    /// Number of full evaluations performed so far.
    #[getter]
    fn rmsd_computations(&self) -> usize {
        self.inner.rmsd_computations()
    }
}

#[pyclass(name = "GaussianProcess")]
struct PyGaussianProcess {
    inner: gp::GpState,
}

#[pymethods]
impl PyGaussianProcess {
    /// Fits on unit-cube inputs; the length scale is chosen from the grid by marginal likelihood.
    #[new]
    #[pyo3(signature = (inputs, targets, length_scales=None, signal_variance=1.0, noise_variance=1e-6))]
    fn new(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        length_scales: Option<Vec<f64>>,
        signal_variance: f64,
        noise_variance: f64,
    ) -> PyResult<Self> {
        let settings = gp::GpSettings {
            length_scales: length_scales.unwrap_or_else(|| gp::DEFAULT_LENGTH_SCALES.to_vec()),
            signal_variance,
            noise_variance,
        };
        Ok(Self {
            inner: gp::GpState::fit(&inputs, &targets, &settings).map_err(py_err)?,
        })
    }

    /// `(mean, variance)` in objective units.
    fn posterior(&self, u: Vec<f64>) -> PyResult<(f64, f64)> {
        self.inner.posterior(&u).map_err(py_err)
    }

    #[getter]
    fn length_scale(&self) -> f64 {
        self.inner.length_scale()
    }

    #[getter]
    fn log_marginal_likelihood(&self) -> f64 {
        self.inner.log_marginal_likelihood()
    }
}

#[pyclass(name = "ConstraintModel")]
struct PyConstraintModel {
    inner: constraint::ConstraintModel,
}

#[pymethods]
impl PyConstraintModel {
    #[new]
    #[pyo3(signature = (features, values, alpha=1.0))]
    fn new(features: Vec<Vec<f64>>, values: Vec<f64>, alpha: f64) -> PyResult<Self> {
        if features.len() != values.len() {
            return Err(PyValueError::new_err("features and values differ in length"));
        }
        let rows: Vec<(Vec<f64>, f64)> = features.into_iter().zip(values).collect();
        Ok(Self {
            inner: constraint::ConstraintModel::train(&rows, alpha).map_err(py_err)?,
        })
    }

    fn predict(&self, features: Vec<f64>) -> PyResult<f64> {
        self.inner.predict_raw(&features).map_err(py_err)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.inner.intercept
    }

    #[getter]
    fn trained(&self) -> bool {
        self.inner.trained
    }
}

#[pyclass(name = "CampaignSettings", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyCampaignSettings {
    total_iterations: usize,
    initial_points: usize,
    workers: usize,
    training_period: usize,
    polling_seconds: f64,
    overhead_seconds: f64,
    rmsd_max: f64,
    seed: u64,
    restarts: usize,
    gate_penalty: f64,
    ridge_alpha: f64,
    error_injection: bool,
    epsilon0: f64,
    n_err: usize,
    backend: String,
}

#[pymethods]
impl PyCampaignSettings {
    #[new]
    #[pyo3(signature = (
        total_iterations=1000, initial_points=30, workers=10, training_period=3,
        polling_seconds=1.0, overhead_seconds=20.0, rmsd_max=2.1, seed=0, restarts=10,
        gate_penalty=1e-3, ridge_alpha=1.0, error_injection=false, epsilon0=1.5, n_err=50,
        backend="virtual".to_string()
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        total_iterations: usize,
        initial_points: usize,
        workers: usize,
        training_period: usize,
        polling_seconds: f64,
        overhead_seconds: f64,
        rmsd_max: f64,
        seed: u64,
        restarts: usize,
        gate_penalty: f64,
        ridge_alpha: f64,
        error_injection: bool,
        epsilon0: f64,
        n_err: usize,
        backend: String,
    ) -> Self {
        Self {
            total_iterations,
            initial_points,
            workers,
            training_period,
            polling_seconds,
            overhead_seconds,
            rmsd_max,
            seed,
            restarts,
            gate_penalty,
            ridge_alpha,
            error_injection,
            epsilon0,
            n_err,
            backend,
        }
    }

    /// Every violated constraint for `strategy`.
    fn diagnostics(&self, strategy: &str) -> PyResult<Vec<String>> {
        let strategy: Strategy = strategy.parse().map_err(py_err)?;
        Ok(self.to_core()?.diagnostics(strategy))
    }

    fn __repr__(&self) -> String {
        format!(
            "CampaignSettings(N={}, n0={}, q={}, P={}, seed={}, backend={})",
            self.total_iterations, self.initial_points, self.workers, self.training_period, self.seed, self.backend
        )
    }
}

impl PyCampaignSettings {
    fn to_core(&self) -> PyResult<optimizers::CampaignSettings> {
        let backend = match self.backend.as_str() {
            "virtual" => Backend::Virtual,
            "local" => Backend::Local,
            other => return Err(PyValueError::new_err(format!("unknown backend `{other}`"))),
        };
        Ok(optimizers::CampaignSettings {
            total_iterations: self.total_iterations,
            initial_points: self.initial_points,
            workers: self.workers,
            training_period: self.training_period,
            polling_seconds: self.polling_seconds,
            overhead_seconds: self.overhead_seconds,
            rmsd_max: self.rmsd_max,
            seed: self.seed,
            restarts: self.restarts,
            gate_penalty: self.gate_penalty,
            ridge_alpha: self.ridge_alpha,
            error_injection: ErrorInjector {
                enabled: self.error_injection,
                epsilon0: self.epsilon0,
                n_err: self.n_err,
            },
            backend,
            ..optimizers::CampaignSettings::default()
        })
    }
}

fn entry_dict<'py>(py: Python<'py>, names: &[String], e: &HistoryEntry) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("iteration", e.iteration)?;
    let config = PyDict::new(py);
    for (name, v) in names.iter().zip(&e.config.0) {
        config.set_item(name, v)?;
    }
    d.set_item("config", config)?;
    d.set_item("objective", e.objective)?;
    d.set_item("constraint_value", e.constraint_value)?;
    d.set_item("is_placeholder", e.is_placeholder)?;
    d.set_item("feasible", e.feasible)?;
    d.set_item("submit_time", e.submit_time)?;
    d.set_item("complete_time", e.complete_time)?;
    d.set_item("agent_id", e.agent_id)?;
    Ok(d)
}

#[pyclass(name = "CampaignResult")]
struct PyCampaignResult {
    inner: optimizers::CampaignResult,
}

impl PyCampaignResult {
    fn names(&self) -> Vec<String> {
        self.inner.space.knobs().iter().map(|k| k.name.clone()).collect()
    }
}

#[pymethods]
impl PyCampaignResult {
    #[getter]
    fn strategy(&self) -> &'static str {
        self.inner.strategy.name()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let names = self.names();
        self.inner.history.iter().map(|e| entry_dict(py, &names, e)).collect()
    }

    /// `(time, best feasible objective)` at each improvement.
    #[getter]
    fn incumbent_trace(&self) -> Vec<(f64, f64)> {
        self.inner.incumbent_trace.iter().map(|p| (p.time, p.best_feasible)).collect()
    }

    #[getter]
    fn final_feasible_objective(&self) -> Option<f64> {
        self.inner.final_feasible_objective()
    }

    #[getter]
    fn best<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyDict>>> {
        let Some(b) = &self.inner.best else {
            return Ok(None);
        };
        let d = PyDict::new(py);
        let config = PyDict::new(py);
        for (name, v) in self.names().iter().zip(&b.config.0) {
            config.set_item(name, v)?;
        }
        d.set_item("config", config)?;
        d.set_item("objective", b.objective)?;
        d.set_item("constraint_value", b.constraint_value)?;
        d.set_item("feasible", b.feasible)?;
        Ok(Some(d))
    }

    /// `(iteration, predicted, observed, ape)` per constraint-model prediction.
    #[getter]
    fn mape(&self) -> Vec<(usize, f64, f64, f64)> {
        self.inner
            .mape
            .records
            .iter()
            .map(|r| (r.iteration, r.predicted, r.observed, r.ape))
            .collect()
    }

    #[getter]
    fn mean_ape(&self) -> Option<f64> {
        self.inner.mape.mean()
    }

    #[getter]
    fn end_time(&self) -> f64 {
        self.inner.end_time
    }

    #[getter]
    fn failures(&self) -> usize {
        self.inner.failures
    }

    #[getter]
    fn agents(&self) -> Vec<PyCampaignResult> {
        self.inner
            .agents
            .iter()
            .map(|a| PyCampaignResult { inner: a.clone() })
            .collect()
    }

    /// The transcript as CSV text.
    fn transcript_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        transcript::write_transcript(&mut buf, &self.inner.space, &self.inner.history).map_err(py_err)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.inner.history.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "CampaignResult(strategy={}, seed={}, evaluations={}, best={:?})",
            self.strategy(),
            self.inner.seed,
            self.inner.history.len(),
            self.inner.final_feasible_objective()
        )
    }
}

/// Closed-form expected improvement for minimization.
#[pyfunction]
fn expected_improvement(mean: f64, variance: f64, incumbent: f64) -> PyResult<f64> {
    acquisition::expected_improvement(mean, variance, incumbent).map_err(py_err)
}

/// Multiplicative error applied to constraint predictions at iteration `i`.
#[pyfunction]
#[pyo3(signature = (i, epsilon0=1.5, n_err=50))]
fn injection_factor(i: usize, epsilon0: f64, n_err: usize) -> f64 {
    ErrorInjector::enabled(epsilon0, n_err).factor(i)
}

/// Runs one strategy on the surrogate, or on an external command when `command` is given.
#[pyfunction]
#[pyo3(signature = (strategy, settings, space=None, command=None, timeout_seconds=3600.0))]
fn run(
    py: Python<'_>,
    strategy: &str,
    settings: PyCampaignSettings,
    space: Option<PyKnobSpace>,
    command: Option<String>,
    timeout_seconds: f64,
) -> PyResult<PyCampaignResult> {
    let strategy: Strategy = strategy.parse().map_err(py_err)?;
    let settings = settings.to_core()?;
    let space = space.map_or_else(knobspace::KnobSpace::ligen8, |s| s.inner);
    let target: Arc<dyn Target> = match command {
        Some(cmd) => {
            let timeout = std::time::Duration::try_from_secs_f64(timeout_seconds)
                .map_err(|e| PyValueError::new_err(e.to_string()))?;
            Arc::new(ExternalTarget::new(&cmd, space, settings.rmsd_max, timeout).map_err(py_err)?)
        }
        None => Arc::new(
            CoreSurrogate::new(
                space,
                SurrogateSpec {
                    rmsd_max: settings.rmsd_max,
                    ..SurrogateSpec::default()
                },
            )
            .map_err(py_err)?,
        ),
    };
    let result = py
        .detach(|| campaign::run_strategy(strategy, target, &settings))
        .map_err(py_err)?;
    Ok(PyCampaignResult { inner: result })
}

/// Diagnostics for a TOML campaign document; empty when valid.
#[pyfunction]
fn validate_config(toml: &str) -> PyResult<Vec<String>> {
    let config = CampaignConfig::from_toml(toml).map_err(py_err)?;
    Ok(campaign::validate(&config))
}

/// Runs a TOML campaign and returns the per-seed summaries as JSON strings.
#[pyfunction]
fn run_campaign(py: Python<'_>, toml: &str) -> PyResult<Vec<String>> {
    let config = CampaignConfig::from_toml(toml).map_err(py_err)?;
    let report = py.detach(|| campaign::run_campaign(&config)).map_err(|e| match e {
        campaign::CampaignError::Invalid(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    })?;
    report
        .summaries
        .iter()
        .map(|s| serde_json::to_string(s).map_err(|e| PyRuntimeError::new_err(e.to_string())))
        .collect()
}

/// `(time, best feasible objective or None, regret or None)` at each completion.
#[pyfunction]
#[pyo3(signature = (result, ground_truth=None))]
fn feasible_regret_curve(result: &PyCampaignResult, ground_truth: Option<f64>) -> Vec<(f64, Option<f64>, Option<f64>)> {
    report::feasible_regret_curve(&result.inner.history, ground_truth)
        .into_iter()
        .map(|p| (p.time, p.best_feasible_objective, p.regret))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (central, ensemble, grid=60.0))]
fn ranking_series(central: &PyCampaignResult, ensemble: &PyCampaignResult, grid: f64) -> PyResult<Vec<(f64, usize)>> {
    report::ranking_series(&central.inner, &ensemble.inner, grid).map_err(py_err)
}

/// `(time, mean or None, coverage)` on a shared grid.
#[pyfunction]
#[pyo3(signature = (results, grid=60.0))]
fn aggregate_seeds(results: Vec<PyRef<'_, PyCampaignResult>>, grid: f64) -> PyResult<Vec<(f64, Option<f64>, usize)>> {
    let inner: Vec<_> = results.iter().map(|r| r.inner.clone()).collect();
    Ok(report::aggregate_seeds(&inner, grid)
        .map_err(py_err)?
        .into_iter()
        .map(|p| (p.time, p.mean, p.coverage))
        .collect())
}

#[pymodule]
fn pyknobtune(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKnobSpace>()?;
    m.add_class::<PySurrogateTarget>()?;
    m.add_class::<PyGaussianProcess>()?;
    m.add_class::<PyConstraintModel>()?;
    m.add_class::<PyCampaignSettings>()?;
    m.add_class::<PyCampaignResult>()?;
    m.add_function(wrap_pyfunction!(expected_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(injection_factor, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(feasible_regret_curve, m)?)?;
    m.add_function(wrap_pyfunction!(ranking_series, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_seeds, m)?)?;
    Ok(())
}
