//! Python bindings for the `bellcert` certification toolkit.
//!
//! Angles cross the boundary in degrees. Long solves release the interpreter
//! lock. Errors map to `ValueError` (bad input), `RuntimeError` (solver
//! trouble) and `OSError` (files).

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use bellcert::bell::{self, alpha_for_theta};
use bellcert::certify::{self, CertifyOptions};
use bellcert::pipeline::config::RunConfig;
use bellcert::pipeline::run::run as run_pipeline;
use bellcert::quantum::{simulated_source, NoiseModel};
use bellcert::tomography;
use bellcert::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Solver(_) | Error::CertificateInvalid(_) => PyRuntimeError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Conditional probabilities `P(a, b | x, y)`, indexed `[x][y][cell]` with
/// cells ordered `++, +-, -+, --`.
#[pyclass(frozen, skip_from_py_object, module = "pybellcert")]
#[derive(Clone)]
struct Behavior {
    inner: bell::Behavior,
}

#[pymethods]
impl Behavior {
    #[new]
    fn new(table: [[[f64; 4]; 2]; 2]) -> PyResult<Self> {
        bell::Behavior::new(table).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn uniform() -> Self {
        Self {
            inner: bell::Behavior::uniform(),
        }
    }

    fn table(&self) -> [[[f64; 4]; 2]; 2] {
        *self.inner.table()
    }

    /// `(ma, mb, corr)`: marginals averaged over the partner's setting and `<A_x B_y>`.
    fn correlators(&self) -> ([f64; 2], [f64; 2], [[f64; 2]; 2]) {
        let c = bell::to_correlators(&self.inner);
        (c.ma, c.mb, c.corr)
    }

    fn signaling_deficit(&self) -> f64 {
        bell::signaling_deficit(&self.inner).max_deficit
    }

    /// Tilted-CHSH value for the self-testing angle `theta_deg`.
    fn tilted_chsh(&self, theta_deg: f64) -> PyResult<f64> {
        let alpha = alpha_for_theta(theta_deg.to_radians()).map_err(to_py)?;
        Ok(bell::tilted_chsh(&bell::to_correlators(&self.inner), alpha))
    }

    fn __repr__(&self) -> String {
        format!("Behavior({:?})", self.inner.table())
    }
}

#[pyclass(frozen, get_all, module = "pybellcert")]
struct FidelityCertificate {
    theta_deg: f64,
    f_s: f64,
    dual_bound: f64,
    primal_objective: f64,
    status: String,
    iterations: usize,
    relative_gap: f64,
}

#[pymethods]
impl FidelityCertificate {
    fn __repr__(&self) -> String {
        format!(
            "FidelityCertificate(theta_deg={}, f_s={:.6}, status={})",
            self.theta_deg, self.f_s, self.status
        )
    }
}

impl From<certify::FidelityCertificate> for FidelityCertificate {
    fn from(c: certify::FidelityCertificate) -> Self {
        Self {
            theta_deg: c.theta.to_degrees(),
            f_s: c.f_s,
            dual_bound: c.dual_bound,
            primal_objective: c.primal_objective,
            status: format!("{:?}", c.diagnostics.status),
            iterations: c.diagnostics.iterations,
            relative_gap: c.diagnostics.relative_gap,
        }
    }
}

/// `(local_bound, quantum_max)` of the tilted-CHSH expression at `theta_deg`.
#[pyfunction]
fn tilted_chsh_bounds(theta_deg: f64) -> PyResult<(f64, f64)> {
    let alpha = alpha_for_theta(theta_deg.to_radians()).map_err(to_py)?;
    Ok((bell::local_bound(alpha), bell::quantum_max(alpha)))
}

/// Exact behavior of the ideal experiment with depolarizing weight `p`.
#[pyfunction]
#[pyo3(signature = (theta_deg, p = 1.0))]
fn simulated_behavior(theta_deg: f64, p: f64) -> PyResult<Behavior> {
    let noise = NoiseModel {
        depolarizing_p: p,
        ..Default::default()
    };
    let (_, inner) = simulated_source(theta_deg.to_radians(), &noise).map_err(to_py)?;
    Ok(Behavior { inner })
}

/// Fidelity of the tomographic reconstruction from exact Pauli statistics.
#[pyfunction]
#[pyo3(signature = (theta_deg, p = 1.0))]
fn tomography_fidelity(theta_deg: f64, p: f64) -> PyResult<f64> {
    let noise = NoiseModel {
        depolarizing_p: p,
        ..Default::default()
    };
    let theta = theta_deg.to_radians();
    let (rho, _) = simulated_source(theta, &noise).map_err(to_py)?;
    let freq = tomography::pauli_probabilities(&rho);
    let e = tomography::expectations_from_probabilities(&freq).map_err(to_py)?;
    tomography::tomography_fidelity(&tomography::reconstruct(&e), theta).map_err(to_py)
}

/// Nearest no-signaling behavior in the NPA relaxation: `(behavior, distance)`.
#[pyfunction]
fn nqa2_regularize(py: Python<'_>, raw: &Behavior) -> PyResult<(Behavior, f64)> {
    let raw = raw.inner;
    let r = py.detach(|| certify::nqa2_regularize(&raw)).map_err(to_py)?;
    Ok((Behavior { inner: r.behavior }, r.distance))
}

/// Regularizes `raw` and certifies a lower bound on the fidelity.
#[pyfunction]
fn certify_behavior(py: Python<'_>, raw: &Behavior, theta_deg: f64) -> PyResult<FidelityCertificate> {
    let raw = raw.inner;
    let out = py
        .detach(|| certify::certify_behavior(&raw, theta_deg.to_radians(), &CertifyOptions::default()))
        .map_err(to_py)?;
    Ok(out.certificate.into())
}

/// `[(epsilon, f_s)]` for each deviation in `eps_grid`.
#[pyfunction]
fn robust_curve(py: Python<'_>, theta_deg: f64, eps_grid: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    let curve = py
        .detach(|| certify::robust_curve(theta_deg.to_radians(), &eps_grid))
        .map_err(to_py)?;
    Ok(curve.into_iter().map(|p| (p.epsilon, p.certificate.f_s)).collect())
}

/// `(f_true, f_reported)` of the single-qubit miscalibration scenario.
#[pyfunction]
fn miscalibration_demo(p: f64, xi_deg: f64) -> PyResult<(f64, f64)> {
    let d = tomography::miscalibration_demo(p, xi_deg.to_radians()).map_err(to_py)?;
    Ok((d.f_true, d.f_reported))
}

/// Runs a batch from config text (the `key = value` format) and returns the
/// report as a JSON string. Nothing is written to disk.
#[pyfunction]
fn run_config(py: Python<'_>, config_text: &str) -> PyResult<String> {
    let cfg = RunConfig::parse(config_text).map_err(to_py)?;
    let out = py.detach(|| run_pipeline(&cfg)).map_err(to_py)?;
    serde_json::to_string(&out.report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pybellcert(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Behavior>()?;
    m.add_class::<FidelityCertificate>()?;
    m.add_function(wrap_pyfunction!(tilted_chsh_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(simulated_behavior, m)?)?;
    m.add_function(wrap_pyfunction!(tomography_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(nqa2_regularize, m)?)?;
    m.add_function(wrap_pyfunction!(certify_behavior, m)?)?;
    m.add_function(wrap_pyfunction!(robust_curve, m)?)?;
    m.add_function(wrap_pyfunction!(miscalibration_demo, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
