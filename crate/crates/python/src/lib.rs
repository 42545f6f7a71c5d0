//! Python bindings. Matrices cross the boundary as row-major nested lists.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use stiefel_consensus::diagnostics::{self, diameter_of};
use stiefel_consensus::scenario::{self, ExitStatus, ScenarioConfig};
use stiefel_consensus::stiefel::{self as st, Matrix, StiefelPoint};
use stiefel_consensus::{integrate, Ensemble, Error, IntegratorConfig, ModelParams, Topology};

type Rows = Vec<Vec<f64>>;
/// Sample times, diameters and final states.
type FirstOrderRun = (Vec<f64>, Vec<f64>, Vec<Rows>);

fn to_py(e: Error) -> PyErr {
    match ExitStatus::of_error(&e) {
        ExitStatus::InvalidConfig => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix_from_rows(rows: &Rows) -> Result<Matrix, Error> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension("expected a non-empty rectangular list of rows".into()));
    }
    Ok(Matrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn rows_from_matrix(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn execute_json(config_json: &str) -> Result<String, Error> {
    let config = ScenarioConfig::from_json(config_json)?;
    let report = scenario::execute(&config)?;
    Ok(serde_json::to_string(&report.verdict)?)
}

pub fn lock_threshold_map(
    p: usize,
    a_min: f64,
    a_max: f64,
    lambda: f64,
    xi_inf: f64,
    kappa: f64,
) -> Result<HashMap<String, f64>, Error> {
    let l = diagnostics::lock_thresholds(p, a_min, a_max, lambda, xi_inf, kappa)?;
    Ok(HashMap::from([
        ("kappa_star".to_owned(), l.kappa_star),
        ("kappa_floor".to_owned(), l.kappa_floor),
        ("alpha".to_owned(), l.alpha),
        ("beta".to_owned(), l.beta),
        ("lambda_bound".to_owned(), l.lambda_bound),
        ("cubic_constant".to_owned(), l.cubic_constant),
    ]))
}

/// Homogeneous first-order run on the all-to-all graph; returns sample
/// times, diameters and final states.
pub fn first_order_run(
    states: &[Rows],
    kappa: f64,
    dt: f64,
    horizon: f64,
    record_every: usize,
) -> Result<FirstOrderRun, Error> {
    let points = states
        .iter()
        .map(|s| StiefelPoint::new(matrix_from_rows(s)?, 1e-10))
        .collect::<Result<Vec<_>, _>>()?;
    let n_agents = points.len();
    let p = points.first().map_or(1, StiefelPoint::p);
    let e0 = Ensemble::first_order(points)?;
    let params = ModelParams::first_order(kappa, ModelParams::homogeneous_zero(n_agents, p));
    let topo = Topology::all_to_all(n_agents)?;
    let cfg = IntegratorConfig::new(dt, horizon, record_every).without_ensembles();
    let traj = integrate(&e0, &params, &topo, &cfg)?;
    let d = traj.diagnostics.iter().map(|r| r.d).collect();
    let finals = traj.final_state.states.iter().map(|s| rows_from_matrix(s.matrix())).collect();
    Ok((traj.times, d, finals))
}

/// Runs a scenario config given as JSON and returns the verdict as JSON.
#[pyfunction]
fn execute(config_json: &str) -> PyResult<String> {
    execute_json(config_json).map_err(to_py)
}

/// Runs a scenario config and writes its artifacts; returns the CLI exit code.
#[pyfunction]
fn run(config_json: &str) -> PyResult<i32> {
    let config = ScenarioConfig::from_json(config_json).map_err(to_py)?;
    let (status, _) = scenario::run_scenario(&config).map_err(to_py)?;
    Ok(status.code())
}

#[pyfunction]
fn retract_polar(x: Rows) -> PyResult<Rows> {
    let m = matrix_from_rows(&x).map_err(to_py)?;
    let s = st::retract_polar(&m).map_err(to_py)?;
    Ok(rows_from_matrix(s.matrix()))
}

/// Largest pairwise Frobenius distance.
#[pyfunction]
fn diameter(states: Vec<Rows>) -> PyResult<f64> {
    let mats = states.iter().map(matrix_from_rows).collect::<Result<Vec<_>, _>>().map_err(to_py)?;
    Ok(diameter_of(&mats).value)
}

#[pyfunction]
fn lock_thresholds(p: usize, a_min: f64, a_max: f64, lambda: f64, xi_inf: f64, kappa: f64) -> PyResult<HashMap<String, f64>> {
    lock_threshold_map(p, a_min, a_max, lambda, xi_inf, kappa).map_err(to_py)
}

/// `(bound_at_t, limsup_bound)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn gronwall_bound(a: f64, b: f64, c: f64, eps0: f64, y0: f64, yprime0: f64, t: f64) -> PyResult<(f64, f64)> {
    let g = diagnostics::gronwall_bound(a, b, c, eps0, y0, yprime0, t).map_err(to_py)?;
    Ok((g.bound_at_t, g.limsup_bound))
}

#[pyfunction]
#[pyo3(signature = (states, kappa, dt, horizon, record_every=1))]
fn simulate_first_order(
    states: Vec<Rows>,
    kappa: f64,
    dt: f64,
    horizon: f64,
    record_every: usize,
) -> PyResult<FirstOrderRun> {
    first_order_run(&states, kappa, dt, horizon, record_every).map_err(to_py)
}

#[pymodule]
fn stiefel_consensus_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(execute, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(retract_polar, m)?)?;
    m.add_function(wrap_pyfunction!(diameter, m)?)?;
    m.add_function(wrap_pyfunction!(lock_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(gronwall_bound, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_first_order, m)?)?;
    Ok(())
}
