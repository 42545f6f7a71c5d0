//! Checks run over a recorded trajectory.

use serde::Serialize;

use super::functionals::relative_states;
use crate::dynamics::ModelParams;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::network::Topology;
use crate::stiefel::Matrix;

/// Relative tolerance on sample spacing.
const SPACING_TOL: f64 = 1e-9;

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(Error::InsufficientHorizon("need at least three samples".into()));
    }
    let h = times[1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > SPACING_TOL * h.max(1.0) {
            return Err(Error::NonUniformSampling(format!(
                "spacing {} at t = {} differs from {h}",
                w[1] - w[0],
                w[0]
            )));
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorSample {
    pub t: f64,
    /// `m G'' + gamma G' + 2 kappa xi G`.
    pub lhs: f64,
    /// `16 m Dv^2 + 8 ||Xi|| + 16 m sqrt(p) ||Xi|| Dv / gamma`.
    pub rhs: f64,
    pub residual: f64,
}

/// Residual `rhs - lhs` of the second-order differential inequality for `G`
/// at interior samples, with `G'` and `G''` from centered differences.
pub fn inequality_monitor_d25(traj: &Trajectory, params: &ModelParams, topo: &Topology) -> Result<Vec<MonitorSample>> {
    let Some(xi) = topo.stats().common_xi() else {
        return Err(Error::param("row averages of the weights are not constant"));
    };
    let h = uniform_step(&traj.times)?;
    let recs = &traj.diagnostics;
    let p = traj.final_state.shape().1 as f64;
    let xi_inf = params.xi_inf();
    let (m, gamma, kappa) = (params.m, params.gamma, params.kappa);
    let mut out = Vec::with_capacity(recs.len().saturating_sub(2));
    for w in recs.windows(3) {
        let (g_minus, g, g_plus) = (w[0].g, w[1].g, w[2].g);
        let Some(dv) = w[1].dvel else {
            return Err(Error::contract("monitor needs a second-order trajectory"));
        };
        let g_dot = (g_plus - g_minus) / (2.0 * h);
        let g_ddot = (g_plus - 2.0 * g + g_minus) / (h * h);
        let lhs = m * g_ddot + gamma * g_dot + 2.0 * kappa * xi * g;
        let rhs = 16.0 * m * dv * dv + 8.0 * xi_inf + 16.0 * m * p.sqrt() * xi_inf / gamma * dv;
        out.push(MonitorSample {
            t: w[1].t,
            lhs,
            rhs,
            residual: rhs - lhs,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VelocityBoundReport {
    /// `max(max_i ||S_i'(0)||, (||Xi|| + kappa a_max sqrt(p)) / gamma)`.
    pub bound: f64,
    pub sup: f64,
    pub sup_time: f64,
    pub passed: bool,
}

pub const VELOCITY_BOUND_SLACK: f64 = 1e-8;

pub fn velocity_bound_check(traj: &Trajectory, params: &ModelParams, topo: &Topology) -> Result<VelocityBoundReport> {
    let p = traj.final_state.shape().1 as f64;
    let steady = (params.xi_inf() + params.kappa * topo.stats().a_max * p.sqrt()) / params.gamma;
    let mut samples = traj.diagnostics.iter().map(|r| r.dvel.map(|v| (r.t, v)));
    let Some(Some((_, initial))) = samples.next() else {
        return Err(Error::contract("velocity bound needs a second-order trajectory"));
    };
    let bound = initial.max(steady);
    let (mut sup_time, mut sup) = (0.0, initial);
    for s in samples {
        let (t, v) = s.ok_or_else(|| Error::contract("missing velocity sample"))?;
        if v > sup {
            sup = v;
            sup_time = t;
        }
    }
    Ok(VelocityBoundReport {
        bound,
        sup,
        sup_time,
        passed: sup <= bound + VELOCITY_BOUND_SLACK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLockOptions {
    pub window: f64,
    pub tol: f64,
    /// Windows ending before this time are ignored.
    pub start: f64,
    /// Increments at or below this are treated as converged and left out of the fit.
    pub floor: f64,
}

impl PhaseLockOptions {
    pub fn new(window: f64, tol: f64) -> Self {
        PhaseLockOptions {
            window,
            tol,
            start: 0.0,
            floor: 1e-12,
        }
    }
}

pub const MIN_LOCK_WINDOWS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLockReport {
    pub locked: bool,
    /// Fitted per-window ratio of successive increments.
    pub rho: f64,
    /// `delta(n)` for every window considered, with its end time.
    pub deltas: Vec<(f64, f64)>,
    pub final_delta: f64,
    /// `S_i^T S_j` at the last window boundary, row-major over `(i, j)`.
    pub limits: Vec<Matrix>,
}

pub fn phase_lock_detector(traj: &Trajectory, window: f64, tol: f64) -> Result<PhaseLockReport> {
    phase_lock_detector_with(traj, &PhaseLockOptions::new(window, tol))
}

/// Window increments `delta(n) = max_ij ||A_ij(nT) - A_ij((n-1)T)||` of the
/// relative states, with a least-squares fit of `ln delta` against `n`.
pub fn phase_lock_detector_with(traj: &Trajectory, opts: &PhaseLockOptions) -> Result<PhaseLockReport> {
    if !(opts.window > 0.0) {
        return Err(Error::param("window must be positive"));
    }
    if traj.ensembles.len() != traj.times.len() {
        return Err(Error::contract("phase-lock detection needs stored ensembles"));
    }
    let horizon = traj.final_time();
    if horizon < 2.0 * opts.window * (1.0 - SPACING_TOL) {
        return Err(Error::InsufficientHorizon(format!(
            "horizon {horizon} shorter than two windows of {}",
            opts.window
        )));
    }
    // indices of samples at t = n * window
    let mut marks = Vec::new();
    let mut n = 0usize;
    loop {
        let target = n as f64 * opts.window;
        if target > horizon * (1.0 + SPACING_TOL) {
            break;
        }
        let idx = traj
            .times
            .iter()
            .position(|&t| (t - target).abs() <= SPACING_TOL * target.max(1.0))
            .ok_or_else(|| {
                Error::NonUniformSampling(format!("no sample at window boundary t = {target}"))
            })?;
        marks.push(idx);
        n += 1;
    }
    let grams: Vec<Vec<Matrix>> = marks.iter().map(|&i| relative_states(&traj.ensembles[i])).collect();
    let mut deltas = Vec::new();
    for k in 1..grams.len() {
        let t = traj.times[marks[k]];
        if t + SPACING_TOL < opts.start {
            continue;
        }
        let d = grams[k]
            .iter()
            .zip(&grams[k - 1])
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        deltas.push((t, d));
    }
    if deltas.len() < MIN_LOCK_WINDOWS {
        return Err(Error::InsufficientHorizon(format!(
            "{} windows after t = {}, need {MIN_LOCK_WINDOWS}",
            deltas.len(),
            opts.start
        )));
    }
    let final_delta = deltas.last().map_or(0.0, |d| d.1);
    let fit: Vec<(f64, f64)> = deltas
        .iter()
        .enumerate()
        .filter(|(_, d)| d.1 > opts.floor)
        .map(|(k, d)| (k as f64, d.1.ln()))
        .collect();
    let rho = if fit.len() < 2 {
        0.0
    } else {
        let n = fit.len() as f64;
        let mx = fit.iter().map(|p| p.0).sum::<f64>() / n;
        let my = fit.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = fit.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = fit.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxy / sxx).exp()
    };
    Ok(PhaseLockReport {
        locked: rho < 1.0 && final_delta <= opts.tol,
        rho,
        deltas,
        final_delta,
        limits: grams.last().cloned().unwrap_or_default(),
    })
}
