//! Python bindings: scenarios, uncertainty sets, the beamformers, worst-case SINR evaluation and
//! the experiment runner. Vectors are lists of `complex`, matrices lists of rows.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rabf::array_model::{self, ArrayGeometry, Interferer, QuadSign, ScenarioFile, UncertaintySpec};
use rabf::baselines::{self, BeamformerResult};
use rabf::blmi::BlmiSettings;
use rabf::harness::{self, ExperimentConfig};
use rabf::hermlinalg::{CMatrix, CVector, HermitianMatrix, C64};
use rabf::{wcsinr_a1, wcsinr_quad, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Solver { .. } | Error::EigenNonConvergence { .. } | Error::Io(_) | Error::Csv(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_vector(v: Vec<C64>) -> CVector {
    CVector::from_vec(v)
}

fn from_vector(v: &CVector) -> Vec<C64> {
    v.iter().copied().collect()
}

fn to_matrix(rows: Vec<Vec<C64>>) -> PyResult<HermitianMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    HermitianMatrix::new(CMatrix::from_fn(n, n, |i, j| rows[i][j])).map_err(py_err)
}

fn from_matrix(m: &HermitianMatrix) -> Vec<Vec<C64>> {
    let n = m.dim();
    (0..n).map(|i| (0..n).map(|j| m.get(i, j)).collect()).collect()
}

/// Simulation scenario; unspecified fields take the 12-sensor reference values.
#[pyclass(name = "Scenario", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: array_model::Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (n_sensors=None, snr_db=None, snapshots=None, seed=None, soi_angle_true=None, soi_angle_presumed=None, interferers=None, phase_sigma=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_sensors: Option<usize>,
        snr_db: Option<f64>,
        snapshots: Option<usize>,
        seed: Option<u64>,
        soi_angle_true: Option<f64>,
        soi_angle_presumed: Option<f64>,
        interferers: Option<Vec<(f64, f64)>>,
        phase_sigma: Option<f64>,
    ) -> PyResult<Self> {
        let file = ScenarioFile {
            n_sensors,
            snr_db,
            snapshots,
            seed,
            soi_angle_true,
            soi_angle_presumed,
            interferers: interferers.map(|v| v.into_iter().map(|(angle_deg, inr_db)| Interferer { angle_deg, inr_db }).collect()),
            phase_sigma,
            ..ScenarioFile::default()
        };
        Ok(Self { inner: file.into_scenario().map_err(py_err)? })
    }

    #[getter]
    fn n_sensors(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn presumed_steering(&self) -> Vec<C64> {
        from_vector(&self.inner.presumed_steering())
    }

    /// Draws snapshots; returns a dict with `r_sample`, `r_inplus_noise` and `a_true`.
    fn simulate(&self) -> PyResult<BTreeMap<String, Py<PyAny>>> {
        let sim = array_model::simulate(&self.inner).map_err(py_err)?;
        Python::attach(|py| {
            let mut out = BTreeMap::new();
            out.insert("r_sample".to_string(), from_matrix(&sim.r_sample).into_pyobject(py)?.into_any().unbind());
            out.insert("r_inplus_noise".to_string(), from_matrix(&sim.r_inplus_noise).into_pyobject(py)?.into_any().unbind());
            out.insert("a_true".to_string(), from_vector(&sim.a_true).into_pyobject(py)?.into_any().unbind());
            Ok(out)
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(n_sensors={}, snr_db={}, snapshots={}, seed={})",
            self.inner.n(),
            self.inner.snr_db,
            self.inner.snapshots,
            self.inner.seed
        )
    }
}

/// Steering-vector uncertainty set.
#[pyclass(name = "UncertaintySet", skip_from_py_object)]
#[derive(Clone)]
struct PyUncertaintySet {
    inner: UncertaintySpec,
}

#[pymethods]
impl PyUncertaintySet {
    /// `||a - a_hat||^2 <= eps` within the shell `N - eta1 <= ||a||^2 <= N + eta2`.
    #[staticmethod]
    fn ball(a_hat: Vec<C64>, eps: f64, eta1: f64, eta2: f64) -> PyResult<Self> {
        Ok(Self { inner: UncertaintySpec::ball(to_vector(a_hat), eps, eta1, eta2).map_err(py_err)? })
    }

    /// `a^H M a <= delta`, or `>= delta` when `lower` is true, within the same shell.
    #[staticmethod]
    #[pyo3(signature = (m, delta, eta1, eta2, lower=false))]
    fn quad(m: Vec<Vec<C64>>, delta: f64, eta1: f64, eta2: f64, lower: bool) -> PyResult<Self> {
        let sign = if lower { QuadSign::Lower } else { QuadSign::Upper };
        Ok(Self { inner: UncertaintySpec::quad(to_matrix(m)?, delta, eta1, eta2, sign).map_err(py_err)? })
    }

    /// The two sector sets `(upper, lower)` for an angular interval in degrees.
    #[staticmethod]
    #[pyo3(signature = (n_sensors, sector, eta1, eta2, quad_points=512, grid_points=10000))]
    fn sector(n_sensors: usize, sector: (f64, f64), eta1: f64, eta2: f64, quad_points: usize, grid_points: usize) -> PyResult<(Self, Self)> {
        let (u, l) = array_model::sector_sets(&ArrayGeometry::ula(n_sensors), sector, eta1, eta2, quad_points, grid_points)
            .map_err(py_err)?;
        Ok((Self { inner: u }, Self { inner: l }))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn shell(&self) -> (f64, f64) {
        self.inner.shell()
    }

    fn violation(&self, a: Vec<C64>) -> PyResult<f64> {
        if a.len() != self.inner.n() {
            return Err(PyValueError::new_err("vector length does not match the set dimension"));
        }
        Ok(self.inner.violation(&to_vector(a)))
    }

    #[pyo3(signature = (a, tol=1e-9))]
    fn contains(&self, a: Vec<C64>, tol: f64) -> PyResult<bool> {
        Ok(self.violation(a)? <= tol)
    }

    fn __repr__(&self) -> String {
        match &self.inner {
            UncertaintySpec::Ball { eps, eta1, eta2, .. } => format!("UncertaintySet.ball(n={}, eps={eps}, eta1={eta1}, eta2={eta2})", self.inner.n()),
            UncertaintySpec::Quad { delta, sign, .. } => format!("UncertaintySet.quad(n={}, delta={delta}, sign={sign:?})", self.inner.n()),
        }
    }
}

/// Weight vector with its objective and method-specific diagnostics.
#[pyclass(name = "Beamformer")]
struct PyBeamformer {
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    w: Vec<C64>,
    #[pyo3(get)]
    objective: f64,
    #[pyo3(get)]
    diagnostics: BTreeMap<String, f64>,
}

impl From<BeamformerResult> for PyBeamformer {
    fn from(r: BeamformerResult) -> Self {
        Self { method: r.method, w: from_vector(&r.w), objective: r.objective, diagnostics: r.diagnostics }
    }
}

#[pymethods]
impl PyBeamformer {
    fn __repr__(&self) -> String {
        format!("Beamformer(method={:?}, objective={})", self.method, self.objective)
    }
}

#[pyfunction]
fn steering(n_sensors: usize, theta_deg: f64) -> Vec<C64> {
    from_vector(&array_model::steering(&ArrayGeometry::ula(n_sensors), theta_deg))
}

#[pyfunction]
fn capon(r: Vec<Vec<C64>>, a: Vec<C64>) -> PyResult<PyBeamformer> {
    Ok(baselines::capon(&to_matrix(r)?, &to_vector(a)).map_err(py_err)?.into())
}

#[pyfunction]
fn socp(r: Vec<Vec<C64>>, a_hat: Vec<C64>, eps: f64) -> PyResult<PyBeamformer> {
    Ok(baselines::socp_worst_case(&to_matrix(r)?, &to_vector(a_hat), eps).map_err(py_err)?.into())
}

#[pyfunction]
fn mvdr_rab(r: Vec<Vec<C64>>, set: PyRef<'_, PyUncertaintySet>) -> PyResult<PyBeamformer> {
    Ok(baselines::mvdr_rab(&to_matrix(r)?, &set.inner).map_err(py_err)?.into())
}

/// Worst-case SINR beamformer over `set`: tightened relaxation plus rank-one restriction.
#[pyfunction]
fn qmi(r: Vec<Vec<C64>>, set: PyRef<'_, PyUncertaintySet>) -> PyResult<PyBeamformer> {
    let r = to_matrix(r)?;
    let settings = BlmiSettings::default();
    let res = match &set.inner {
        UncertaintySpec::Ball { .. } => wcsinr_a1::qmi_beamformer(&r, &set.inner, &settings),
        UncertaintySpec::Quad { .. } => wcsinr_quad::qmi_beamformer_quad(&r, &set.inner, &settings),
    };
    Ok(res.map_err(py_err)?.into())
}

/// `min |w^H a|^2` over the set; returns `(value, minimizer)`.
#[pyfunction]
fn inner_min(w: Vec<C64>, set: PyRef<'_, PyUncertaintySet>) -> PyResult<(f64, Vec<C64>)> {
    let w = to_vector(w);
    let res = match &set.inner {
        UncertaintySpec::Ball { .. } => wcsinr_a1::inner_min(&w, &set.inner),
        UncertaintySpec::Quad { .. } => wcsinr_quad::inner_min_quad(&w, &set.inner),
    }
    .map_err(py_err)?;
    Ok((res.value, from_vector(&res.minimizer_a)))
}

#[pyfunction]
fn worst_case_sinr(w: Vec<C64>, set: PyRef<'_, PyUncertaintySet>, r: Vec<Vec<C64>>) -> PyResult<f64> {
    harness::evaluate_worst_case_sinr(&to_vector(w), &set.inner, &to_matrix(r)?).map_err(py_err)
}

/// Runs a sweep from a TOML config text and returns `(csv_path, number_of_rows)`.
#[pyfunction]
#[pyo3(signature = (config_toml, output=None))]
fn run_experiment(config_toml: &str, output: Option<PathBuf>) -> PyResult<(String, usize)> {
    let mut cfg = ExperimentConfig::from_toml_str(config_toml).map_err(py_err)?;
    if let Some(o) = output {
        cfg.output = o;
    }
    let out = harness::run_experiment(&cfg).map_err(py_err)?;
    Ok((out.csv_path.display().to_string(), out.rows.len()))
}

/// Built-in self-checks; returns `(name, passed, detail)` per check.
#[pyfunction]
#[pyo3(signature = (instances=5, seed=0))]
fn validate(instances: usize, seed: u64) -> PyResult<Vec<(String, bool, String)>> {
    let checks = harness::validate_suite(instances, seed).map_err(py_err)?;
    Ok(checks.into_iter().map(|c| (c.name.to_string(), c.passed, c.detail)).collect())
}

#[pymodule]
fn pyrabf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyUncertaintySet>()?;
    m.add_class::<PyBeamformer>()?;
    m.add_function(wrap_pyfunction!(steering, m)?)?;
    m.add_function(wrap_pyfunction!(capon, m)?)?;
    m.add_function(wrap_pyfunction!(socp, m)?)?;
    m.add_function(wrap_pyfunction!(mvdr_rab, m)?)?;
    m.add_function(wrap_pyfunction!(qmi, m)?)?;
    m.add_function(wrap_pyfunction!(inner_min, m)?)?;
    m.add_function(wrap_pyfunction!(worst_case_sinr, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
