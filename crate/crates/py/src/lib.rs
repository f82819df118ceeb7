//! Python module `pyjosephson`: rotation numbers, monodromy, constrictions, spectral curves,
//! isomonodromic trajectories and portraits from the `josephson` crate.

use josephson::heun::{entire_solution_score, spectral_scan};
use josephson::integrate::OdeSettings;
use josephson::isomono::{detect_jos_crossing, isoflow_continued_sampled, josephson_state};
use josephson::monodromy::{build_josephson_system, monodromy_matrix};
use josephson::poincare::{poincare_map_with, rotation_number_with, RotationResult};
use josephson::portrait::{
    build_portrait, find_constrictions, growth_point, portrait_json, Constriction, PortraitConfig,
};
use josephson::slowfast::{classify_slow_curve, convexity_certificate};
use josephson::{Error, HeunParams, PhysParams, ReducedParams};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(z: josephson::linalg::C64) -> (f64, f64) {
    (z.re, z.im)
}

fn err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Unsupported(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn settings(rel_tol: f64, abs_tol: f64) -> PyResult<OdeSettings> {
    let s = OdeSettings::with_tol(rel_tol, abs_tol);
    s.validate().map_err(err)?;
    Ok(s)
}

#[pyclass(name = "RotationResult", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyRotationResult {
    pub rho: f64,
    pub method: String,
    pub winding: i64,
    pub certified_error: f64,
    pub map_type: String,
}

impl From<RotationResult> for PyRotationResult {
    fn from(r: RotationResult) -> Self {
        PyRotationResult {
            rho: r.rho,
            method: format!("{:?}", r.method),
            winding: r.winding,
            certified_error: r.certified_error,
            map_type: format!("{:?}", r.map_type),
        }
    }
}

#[pymethods]
impl PyRotationResult {
    fn __repr__(&self) -> String {
        format!("RotationResult(rho={}, method={}, map_type={})", self.rho, self.method, self.map_type)
    }
}

#[pyclass(name = "Constriction", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyConstriction {
    pub ell: u32,
    #[pyo3(name = "A")]
    pub a: f64,
    #[pyo3(name = "B")]
    pub b: f64,
    pub omega: f64,
    pub residual: f64,
    pub defect: f64,
    pub heun_score: f64,
    pub conjugate_det: f64,
    pub kind: String,
}

impl From<Constriction> for PyConstriction {
    fn from(c: Constriction) -> Self {
        PyConstriction {
            ell: c.ell,
            a: c.a,
            b: c.b,
            omega: c.omega,
            residual: c.residual,
            defect: c.defect,
            heun_score: c.heun_score,
            conjugate_det: c.conjugate_det,
            kind: format!("{:?}", c.kind).to_lowercase(),
        }
    }
}

#[pymethods]
impl PyConstriction {
    fn __repr__(&self) -> String {
        format!("Constriction(ell={}, A={}, B={}, kind={})", self.ell, self.a, self.b, self.kind)
    }
}

/// Rotation number of the model at `(B, A, omega)`.
#[pyfunction]
#[pyo3(signature = (b, a, omega, rel_tol = 1e-10, abs_tol = 1e-12))]
fn rotation_number(b: f64, a: f64, omega: f64, rel_tol: f64, abs_tol: f64) -> PyResult<PyRotationResult> {
    let p = PhysParams::new(b, a, omega).map_err(err)?;
    Ok(rotation_number_with(&p, &settings(rel_tol, abs_tol)?).map_err(err)?.into())
}

/// Lifted period-2π map of the torus equation with reduced parameters.
#[pyfunction]
#[pyo3(signature = (ell, mu, eta, theta0, rel_tol = 1e-10, abs_tol = 1e-12))]
fn poincare_map(ell: f64, mu: f64, eta: f64, theta0: f64, rel_tol: f64, abs_tol: f64) -> PyResult<f64> {
    poincare_map_with(&ReducedParams { ell, mu, eta }, theta0, &settings(rel_tol, abs_tol)?).map_err(err)
}

/// Monodromy matrix of the linear system as nested `(re, im)` pairs.
#[pyfunction]
fn monodromy(ell: f64, mu: f64, eta: f64) -> PyResult<[[(f64, f64); 2]; 2]> {
    let sys = build_josephson_system(&ReducedParams { ell, mu, eta }).map_err(err)?;
    let m = monodromy_matrix(&sys, &OdeSettings::default()).map_err(err)?;
    Ok([[to_py(m.get(0, 0)), to_py(m.get(0, 1))], [to_py(m.get(1, 0)), to_py(m.get(1, 1))]])
}

#[pyfunction]
#[pyo3(name = "growth_point")]
fn py_growth_point(r: i64, omega: f64) -> PyResult<f64> {
    growth_point(r, omega).map_err(err)
}

#[pyfunction]
#[pyo3(name = "find_constrictions", signature = (ell, omega, a_min = 0.0, a_max = 10.0))]
fn py_find_constrictions(
    py: Python<'_>,
    ell: u32,
    omega: f64,
    a_min: f64,
    a_max: f64,
) -> PyResult<Vec<PyConstriction>> {
    let found = py.detach(|| find_constrictions(ell, omega, (a_min, a_max), &OdeSettings::default())).map_err(err)?;
    Ok(found.into_iter().map(Into::into).collect())
}

/// Entire-solution score of the Heun equation; small values indicate an entire solution.
#[pyfunction]
#[pyo3(signature = (ell, mu, lam, terms = 80))]
fn entire_score(ell: f64, mu: f64, lam: f64, terms: usize) -> PyResult<f64> {
    entire_solution_score(&HeunParams { ell, mu, lambda: lam }, terms).map_err(err)
}

/// Roots `(mu, lambda, A)` of the conjugate polynomial determinant.
#[pyfunction]
#[pyo3(signature = (ell, omega, mu_max = 50.0))]
fn spectral_roots(ell: u32, omega: f64, mu_max: f64) -> PyResult<Vec<(f64, f64, f64)>> {
    let roots = spectral_scan(ell, omega, mu_max).map_err(err)?;
    Ok(roots.iter().map(|r| (r.mu, r.lambda, r.amplitude(omega))).collect())
}

/// Label of the slow curve and its convexity certificate.
#[pyfunction]
fn slow_curve(b: f64, a: f64) -> PyResult<(String, f64)> {
    let c = classify_slow_curve(b, a).map_err(err)?;
    Ok((format!("{:?}", c.label), convexity_certificate(b, a).map_err(err)?))
}

/// Isomonodromic trajectory from a Josephson system: `(tau, w)` samples and Josephson
/// crossings `(tau0, residue)`.
#[pyfunction]
#[pyo3(signature = (ell, mu, eta, span = 2.0, step = 1e-3))]
#[allow(clippy::type_complexity)]
fn isoflow(
    py: Python<'_>,
    ell: f64,
    mu: f64,
    eta: f64,
    span: f64,
    step: f64,
) -> PyResult<(Vec<(f64, Option<f64>)>, Vec<(f64, Option<f64>)>)> {
    let s = OdeSettings::with_tol(1e-12, 1e-14);
    py.detach(|| {
        let st = josephson_state(&ReducedParams::new(ell, mu, eta)?)?;
        let traj = isoflow_continued_sampled(&st, st.tau * span, step, &s)?;
        let crossings = detect_jos_crossing(&traj, &s)?;
        Ok((
            traj.samples.iter().map(|x| (x.tau, x.w())).collect(),
            crossings.iter().map(|c| (c.tau0, c.residue)).collect(),
        ))
    })
    .map_err(err)
}

/// Portrait as `portrait-v1` JSON text.
#[pyfunction]
#[pyo3(signature = (omega, r_max = 3, a_max = 10.0, samples = 41, seed = 0))]
fn portrait(py: Python<'_>, omega: f64, r_max: u32, a_max: f64, samples: usize, seed: u64) -> PyResult<String> {
    let cfg = PortraitConfig { omega, r_max, a_max, a_samples: samples, seed };
    py.detach(|| build_portrait(&cfg, &OdeSettings::default()).and_then(|p| portrait_json(&p))).map_err(err)
}

#[pymodule]
fn pyjosephson(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", josephson::VERSION)?;
    m.add_class::<PyRotationResult>()?;
    m.add_class::<PyConstriction>()?;
    m.add_function(wrap_pyfunction!(rotation_number, m)?)?;
    m.add_function(wrap_pyfunction!(poincare_map, m)?)?;
    m.add_function(wrap_pyfunction!(monodromy, m)?)?;
    m.add_function(wrap_pyfunction!(py_growth_point, m)?)?;
    m.add_function(wrap_pyfunction!(py_find_constrictions, m)?)?;
    m.add_function(wrap_pyfunction!(entire_score, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_roots, m)?)?;
    m.add_function(wrap_pyfunction!(slow_curve, m)?)?;
    m.add_function(wrap_pyfunction!(isoflow, m)?)?;
    m.add_function(wrap_pyfunction!(portrait, m)?)?;
    Ok(())
}
