//! Fixed-step classical Runge-Kutta integration with post-step drift repair.

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::dynamics::{check_inputs, first_order_unchecked, second_order_accelerations, Ensemble, ModelParams};
use crate::error::{Error, Result};
use crate::network::Topology;
use crate::stiefel::{
    add_scaled, gram_drift, project_tangent_raw, retract_polar, tangency_residual, Matrix, StiefelPoint, DEFAULT_DRIFT_FAIL,
    DEFAULT_DRIFT_TOLERANCE,
};

/// A state that RK4 can combine linearly.
pub trait VectorState: Clone {
    /// `self + h * rate`.
    fn add_scaled(&self, rate: &Self, h: f64) -> Self;
    fn is_finite(&self) -> bool;
}

impl VectorState for Vec<f64> {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        self.iter().zip(rate).map(|(x, r)| x + h * r).collect()
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl VectorState for Vec<Matrix> {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        self.iter()
            .zip(rate)
            .map(|(x, r)| {
                let mut y = x.clone();
                add_scaled(&mut y, h, r);
                y
            })
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.iter().all(|v| v.is_finite()))
    }
}

/// Positions and (for the second-order model) velocities as plain matrices,
/// free to leave the manifold inside a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub x: Vec<Matrix>,
    pub v: Option<Vec<Matrix>>,
}

impl VectorState for Phase {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        Phase {
            x: self.x.add_scaled(&rate.x, h),
            v: match (&self.v, &rate.v) {
                (Some(v), Some(a)) => Some(v.add_scaled(a, h)),
                _ => None,
            },
        }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.as_ref().is_none_or(|v| v.is_finite())
    }
}

impl From<&Ensemble> for Phase {
    fn from(e: &Ensemble) -> Self {
        Phase {
            x: e.state_matrices(),
            v: e.velocities.clone(),
        }
    }
}

impl Phase {
    /// Wraps the matrices without checking the manifold constraint.
    pub(crate) fn into_ensemble(self) -> Ensemble {
        Ensemble {
            states: self.x.into_iter().map(StiefelPoint::from_raw).collect(),
            velocities: self.v,
        }
    }
}

/// One classical RK4 step of `y' = f(y)`.
pub fn rk4_step<S, F>(y: &S, dt: f64, mut f: F) -> Result<S>
where
    S: VectorState,
    F: FnMut(&S) -> S,
{
    let k1 = f(y);
    let k2 = f(&y.add_scaled(&k1, 0.5 * dt));
    let k3 = f(&y.add_scaled(&k2, 0.5 * dt));
    let k4 = f(&y.add_scaled(&k3, dt));
    let out = y
        .add_scaled(&k1, dt / 6.0)
        .add_scaled(&k2, dt / 3.0)
        .add_scaled(&k3, dt / 3.0)
        .add_scaled(&k4, dt / 6.0);
    for k in [&k1, &k2, &k3, &k4, &out] {
        if !k.is_finite() {
            return Err(Error::BlowUp { t: f64::NAN });
        }
    }
    Ok(out)
}

/// The vector field of whichever model `e` belongs to, on raw phase data.
pub(crate) fn phase_rate(y: &Phase, params: &ModelParams, topo: &Topology) -> Phase {
    match &y.v {
        None => Phase {
            x: first_order_unchecked(&y.x, params, topo),
            v: None,
        },
        Some(v) => Phase {
            x: v.clone(),
            v: Some(second_order_accelerations(&y.x, v, params, topo)),
        },
    }
}

fn check_model(e: &Ensemble, params: &ModelParams, topo: &Topology) -> Result<()> {
    check_inputs(e, params, topo)?;
    if e.is_second_order() && !(params.m > 0.0) {
        return Err(Error::param("second-order integration needs m > 0"));
    }
    Ok(())
}

/// One RK4 step of the first- or second-order flow, without retraction.
pub fn step_rk4(e: &Ensemble, params: &ModelParams, topo: &Topology, dt: f64) -> Result<Ensemble> {
    check_model(e, params, topo)?;
    if !(dt > 0.0) {
        return Err(Error::param("dt must be positive"));
    }
    Ok(rk4_step(&Phase::from(e), dt, |y| phase_rate(y, params, topo))?.into_ensemble())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub horizon: f64,
    pub record_every: usize,
    pub drift_repair: f64,
    pub drift_fail: f64,
    /// Store the ensemble at every sample; the final state is always kept.
    pub keep_ensembles: bool,
}

impl IntegratorConfig {
    pub fn new(dt: f64, horizon: f64, record_every: usize) -> Self {
        IntegratorConfig {
            dt,
            horizon,
            record_every,
            drift_repair: DEFAULT_DRIFT_TOLERANCE,
            drift_fail: DEFAULT_DRIFT_FAIL,
            keep_ensembles: true,
        }
    }

    pub fn without_ensembles(mut self) -> Self {
        self.keep_ensembles = false;
        self
    }

    /// Number of steps; the horizon must be an integer multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::param(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt) || !self.horizon.is_finite() {
            return Err(Error::param(format!(
                "horizon {} must be at least dt = {}",
                self.horizon, self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every must be positive"));
        }
        if !(self.drift_repair > 0.0 && self.drift_repair < self.drift_fail) {
            return Err(Error::param("need 0 < drift_repair < drift_fail"));
        }
        let ratio = self.horizon / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-6 {
            return Err(Error::param(format!(
                "horizon {} is not a multiple of dt = {}",
                self.horizon, self.dt
            )));
        }
        Ok(steps as usize)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One ensemble per sample, empty when `keep_ensembles` was off.
    pub ensembles: Vec<Ensemble>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub repairs: usize,
    pub final_state: Ensemble,
    /// Largest pre-repair state drift over the whole run.
    pub max_drift: f64,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least two samples")
    }
}

/// Per-agent state drift and velocity-constraint residual.
fn constraint_defects(y: &Phase, i: usize) -> (f64, f64) {
    let drift = gram_drift(&y.x[i]);
    let vel = y
        .v
        .as_ref()
        .map_or(0.0, |v| 2.0 * tangency_residual(&y.x[i], &v[i]));
    (drift, vel)
}

/// Integrates to the horizon, sampling diagnostics every `record_every`
/// steps and at the final step.
pub fn integrate(e0: &Ensemble, params: &ModelParams, topo: &Topology, cfg: &IntegratorConfig) -> Result<Trajectory> {
    check_model(e0, params, topo)?;
    let steps = cfg.steps()?;
    let initial_drift = e0.max_drift();
    if initial_drift > cfg.drift_repair {
        return Err(Error::contract(format!(
            "initial ensemble is off the manifold (drift {initial_drift:e})"
        )));
    }
    if e0.max_velocity_constraint() > cfg.drift_repair {
        return Err(Error::contract("initial velocities violate the tangency constraint"));
    }

    let mut traj = Trajectory {
        times: Vec::with_capacity(steps / cfg.record_every + 2),
        ensembles: Vec::new(),
        diagnostics: Vec::with_capacity(steps / cfg.record_every + 2),
        repairs: 0,
        final_state: e0.clone(),
        max_drift: initial_drift,
    };
    traj.times.push(0.0);
    traj.diagnostics.push(diagnostics::record(e0, params, topo, 0.0, initial_drift));
    if cfg.keep_ensembles {
        traj.ensembles.push(e0.clone());
    }

    let mut y = Phase::from(e0);
    let mut window_drift: f64 = 0.0;
    for k in 1..=steps {
        let t = k as f64 * cfg.dt;
        y = rk4_step(&y, cfg.dt, |s| phase_rate(s, params, topo)).map_err(|_| Error::BlowUp { t })?;
        for i in 0..y.x.len() {
            let (drift, vel) = constraint_defects(&y, i);
            window_drift = window_drift.max(drift);
            if drift > cfg.drift_fail {
                return Err(Error::DriftAbort {
                    t,
                    agent: i,
                    drift,
                    limit: cfg.drift_fail,
                });
            }
            if drift > cfg.drift_repair || vel > cfg.drift_repair {
                let s = retract_polar(&y.x[i])?.into_matrix();
                if let Some(v) = y.v.as_mut() {
                    v[i] = project_tangent_raw(&v[i], &s);
                }
                y.x[i] = s;
                traj.repairs += 1;
            }
        }
        traj.max_drift = traj.max_drift.max(window_drift);
        if k % cfg.record_every == 0 || k == steps {
            let e = y.clone().into_ensemble();
            traj.times.push(t);
            traj.diagnostics.push(diagnostics::record(&e, params, topo, t, window_drift));
            window_drift = 0.0;
            if cfg.keep_ensembles {
                traj.ensembles.push(e);
            }
        }
    }
    traj.final_state = y.into_ensemble();
    Ok(traj)
}
