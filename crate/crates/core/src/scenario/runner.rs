//! The named experiments behind `stiefel-sync run`.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::{InitKind, ScenarioConfig, ScenarioKind};
use super::init::{heterogeneous_frequencies, homogeneous_frequencies, tangent_velocities, uniform, Cluster};
use super::output::{resolve_output_dir, write_csv, write_json, Assertion, Comparison, Verdict};
use crate::diagnostics::{
    inequality_monitor_d25, inter_diameter, lock_thresholds, phase_lock_detector_with, velocity_bound_check,
    PhaseLockOptions, VELOCITY_BOUND_SLACK,
};
use crate::dynamics::{
    reduced_velocity, rhs_first_order, rhs_kuramoto, rhs_so_n, rhs_sphere, Ensemble, FlowOrder, ModelParams,
};
use crate::error::{Error, Result};
use crate::integrator::{integrate, rk4_step, IntegratorConfig, Trajectory};
use crate::network::Topology;
use crate::stiefel::{random_stiefel_with, rng_from_seed, FrequencyMatrix, Matrix, SimRng, StiefelPoint};

pub const DRIFT_LIMIT: f64 = 1e-8;
pub const DIAMETER_STEP_SLACK: f64 = 1e-10;
pub const DIAMETER_RATE_SLACK: f64 = 1e-4;
pub const FINAL_DIAMETER_TOL: f64 = 1e-6;
pub const SECOND_ORDER_FINAL_TOL: f64 = 1e-5;
pub const MONITOR_RESIDUAL_FLOOR: f64 = -1e-6;
pub const ENERGY_STEP_SLACK: f64 = 1e-10;
pub const LOCK_TOL: f64 = 1e-8;
pub const LOCK_RATIO_FACTOR: f64 = 2.0;
pub const NORMALIZED_VELOCITY_FACTOR: f64 = 10.0;
pub const CONTRACTION_SLACK: f64 = 1e-8;
pub const SWEEP_SLOPE_FACTOR: f64 = 0.8;
pub const TRANSFORM_TOL: f64 = 1e-8;
pub const RHS_REDUCTION_TOL: f64 = 1e-12;
pub const TRAJECTORY_REDUCTION_TOL: f64 = 1e-10;
pub const SHIFT_TOL: f64 = 1e-10;

/// A labelled trajectory produced by a scenario; written as `<label>.csv`.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub label: String,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub verdict: Verdict,
    pub runs: Vec<ScenarioRun>,
}

/// Validates the config and runs its scenario without touching the filesystem.
pub fn execute(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.validate()?;
    match config.scenario {
        ScenarioKind::FirstOrderHomogeneous => first_order_homogeneous(config),
        ScenarioKind::FirstOrderLocking => first_order_locking(config),
        ScenarioKind::SecondOrderHomogeneous => second_order_homogeneous(config),
        ScenarioKind::PracticalConsensusSweep => practical_consensus_sweep(config),
        ScenarioKind::InvarianceChecks => invariance_checks(config),
    }
}

/// Process exit status of a scenario run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Passed = 0,
    AssertionFailed = 1,
    InvalidConfig = 2,
    Aborted = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// Config, parameter and shape errors are invalid input; anything else
    /// stopped a run that had started.
    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Parameter(_) | Error::Dimension(_) => ExitStatus::InvalidConfig,
            _ => ExitStatus::Aborted,
        }
    }
}

/// Runs a config and writes `verdict.json` plus one CSV per trajectory into
/// its output directory. The verdict is written on failure too, with `error` set.
pub fn run_scenario(config: &ScenarioConfig) -> Result<(ExitStatus, Verdict)> {
    let dir = resolve_output_dir(config);
    run_scenario_in(config, &dir)
}

pub fn run_scenario_in(config: &ScenarioConfig, dir: &Path) -> Result<(ExitStatus, Verdict)> {
    let (status, verdict, runs) = match execute(config) {
        Ok(report) => {
            let status = if report.verdict.passed {
                ExitStatus::Passed
            } else {
                ExitStatus::AssertionFailed
            };
            (status, report.verdict, report.runs)
        }
        Err(e) => {
            let mut v = Verdict::new(config);
            v.passed = false;
            v.error = Some(e.to_string());
            (ExitStatus::of_error(&e), v, Vec::new())
        }
    };
    fs::create_dir_all(dir)?;
    for run in &runs {
        write_csv(&dir.join(format!("{}.csv", run.label)), &run.trajectory.diagnostics)?;
    }
    write_json(&dir.join("verdict.json"), &verdict)?;
    Ok((status, verdict))
}

/// Step count rounded to the nearest whole step, at least one.
fn integrator_config(dt: f64, horizon: f64, record_every: usize) -> IntegratorConfig {
    let steps = (horizon / dt).round().max(1.0);
    IntegratorConfig::new(dt, steps * dt, record_every)
}

fn first_order_dt(config: &ScenarioConfig, kappa: f64) -> f64 {
    config.dt.unwrap_or_else(|| ScenarioConfig::default_dt(kappa, None))
}

fn second_order_dt(config: &ScenarioConfig, kappa: f64, m: f64) -> f64 {
    config
        .dt
        .unwrap_or_else(|| ScenarioConfig::default_dt(kappa, Some((m, config.gamma))))
}

fn initial_states(config: &ScenarioConfig, rng: &mut SimRng, default_diameter: f64) -> Result<Vec<StiefelPoint>> {
    match config.init {
        InitKind::Uniform => uniform(config.n, config.p, config.agents, rng),
        InitKind::Clustered => {
            let cluster = Cluster::sample(config.n, config.p, config.agents, rng)?;
            if config.agents < 2 {
                return cluster.at_radius(0.0);
            }
            cluster.with_diameter(config.initial_diameter.unwrap_or(default_diameter))
        }
    }
}

fn drift_assertion(v: &mut Verdict, trajs: &[&Trajectory]) {
    let drift = trajs.iter().map(|t| t.max_drift).fold(0.0, f64::max);
    v.repairs += trajs.iter().map(|t| t.repairs).sum::<usize>();
    v.check(Assertion::new(
        "max_drift",
        "states stay on the manifold: max ||S^T S - I||_F over the run",
        drift,
        Comparison::AtMost,
        DRIFT_LIMIT,
    ));
}

/// Least-squares slope of `ln y` against `x` over points with `y > floor`.
pub fn log_slope(points: impl IntoIterator<Item = (f64, f64)>, floor: f64) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|p| p.1 > floor)
        .map(|(x, y)| (x, y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn first_order_homogeneous(config: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut v = Verdict::new(config);
    let topo = config.topology.build(config.agents)?;
    let stats = topo.stats();
    let mut rng = rng_from_seed(config.seed);
    let states = initial_states(config, &mut rng, 1.0)?;
    let e0 = Ensemble::first_order(states)?;
    let params = ModelParams::first_order(config.kappa, ModelParams::homogeneous_zero(config.agents, config.p));
    let dt = first_order_dt(config, config.kappa);
    let icfg = integrator_config(dt, config.horizon(), config.record_every.unwrap_or(10)).without_ensembles();
    let traj = integrate(&e0, &params, &topo, &icfg)?;
    let recs = &traj.diagnostics;

    v.check(Assertion::new(
        "initial_diameter",
        "initial diameter below sqrt(2)",
        recs[0].d,
        Comparison::Below,
        2.0f64.sqrt(),
    ));
    let max_increase = recs.windows(2).map(|w| w[1].d - w[0].d).fold(f64::NEG_INFINITY, f64::max);
    v.check(Assertion::new(
        "diameter_non_increasing",
        "largest increase of the diameter between samples",
        max_increase,
        Comparison::AtMost,
        DIAMETER_STEP_SLACK,
    ));
    let rate_excess = diameter_rate_excess(&traj, config.kappa * stats.a_min);
    v.check(Assertion::new(
        "diameter_decay_inequality",
        "max of d(D^2)/dt + (kappa a_min / 4)(2 - D^2) D^2 over interior samples",
        rate_excess,
        Comparison::AtMost,
        DIAMETER_RATE_SLACK,
    ));
    let final_d = recs.last().map_or(f64::NAN, |r| r.d);
    v.check(Assertion::new(
        "final_diameter",
        "diameter at the horizon",
        final_d,
        Comparison::AtMost,
        FINAL_DIAMETER_TOL,
    ));
    drift_assertion(&mut v, &[&traj]);
    v.observe("horizon", traj.final_time());
    v.observe("dt", dt);
    v.observe(
        "diameter_decay_rate",
        -log_slope(recs.iter().map(|r| (r.t, r.d)), 1e-12),
    );
    Ok(ScenarioReport {
        verdict: v,
        runs: vec![ScenarioRun {
            label: "trajectory".into(),
            trajectory: traj,
        }],
    })
}

/// `max_k [ (D^2)'(t_k) + (c/4)(2 - D_k^2) D_k^2 ]` with centered differences.
pub fn diameter_rate_excess(traj: &Trajectory, kappa_a_min: f64) -> f64 {
    let recs = &traj.diagnostics;
    let mut worst = f64::NEG_INFINITY;
    for k in 1..recs.len().saturating_sub(1) {
        let h = recs[k + 1].t - recs[k - 1].t;
        let d2 = recs[k].d * recs[k].d;
        let slope = (recs[k + 1].d.powi(2) - recs[k - 1].d.powi(2)) / h;
        worst = worst.max(slope + kappa_a_min / 4.0 * (2.0 - d2) * d2);
    }
    worst
}

fn first_order_locking(config: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut v = Verdict::new(config);
    let topo = config.topology.build(config.agents)?;
    let stats = topo.stats();
    let p = config.p;
    v.check(Assertion::new(
        "lambda_positive",
        "Lambda = a_min - (N-1)/N (a_max + d_A) is positive",
        stats.lambda,
        Comparison::Above,
        0.0,
    ));
    if !stats.lambda_condition(p) {
        v.error = Some("Lambda outside (0, 8 p a_max^2); no threshold is defined".into());
        v.passed = false;
        return Ok(ScenarioReport { verdict: v, runs: vec![] });
    }
    let mut rng = rng_from_seed(config.seed);
    let xis = heterogeneous_frequencies(p, config.agents, config.xi_scale, &mut rng)?;
    let params = ModelParams::first_order(config.kappa, xis);
    let xi_inf = params.xi_inf();
    let lock = match lock_thresholds(p, stats.a_min, stats.a_max, stats.lambda, xi_inf, config.kappa) {
        Ok(l) => l,
        Err(Error::NoLockRoots(f)) => {
            v.check(Assertion::new(
                "cubic_has_roots",
                "value of r^3 - 2r + c0 at sqrt(2/3) (must be negative for two positive roots)",
                f,
                Comparison::AtMost,
                0.0,
            ));
            return Ok(ScenarioReport { verdict: v, runs: vec![] });
        }
        Err(e) => return Err(e),
    };
    v.observe("kappa_star", lock.kappa_star);
    v.observe("kappa_floor", lock.kappa_floor);
    v.observe("alpha", lock.alpha);
    v.observe("beta", lock.beta);
    v.observe("lambda_bound", lock.lambda_bound);
    v.check(Assertion::new(
        "coupling_condition",
        "kappa exceeds max(kappa_star, sqrt(6p)/9 ||Xi|| / a_min)",
        config.kappa,
        Comparison::Above,
        lock.kappa_star.max(lock.kappa_floor),
    ));
    v.check(Assertion::new(
        "alpha_below_lambda_bound",
        "smaller cubic root below Lambda / (2 a_max sqrt(p))",
        lock.alpha,
        Comparison::Below,
        lock.lambda_bound,
    ));
    let rate = lock.contraction_rate(config.kappa, stats.lambda, stats.a_max, p);
    v.observe("predicted_rate", rate);

    let target = config.initial_diameter.unwrap_or(0.5 * lock.beta);
    let dt = first_order_dt(config, config.kappa);
    let horizon = config.horizon();
    let window = config.window.unwrap_or(0.15);
    let record_every = config.record_every.unwrap_or(10);
    let icfg = integrator_config(dt, horizon, record_every);
    let mut trajs = Vec::with_capacity(2);
    for offset in 0..2u64 {
        let mut rng = rng_from_seed(config.seed.wrapping_add(1 + offset));
        let cluster = Cluster::sample(config.n, p, config.agents, &mut rng)?;
        let e0 = Ensemble::first_order(cluster.with_diameter(target)?)?;
        trajs.push(integrate(&e0, &params, &topo, &icfg)?);
    }
    let (a, b) = (&trajs[0], &trajs[1]);
    v.check(Assertion::new(
        "initial_diameter_below_beta",
        "initial diameter below the larger cubic root",
        a.diagnostics[0].d.max(b.diagnostics[0].d),
        Comparison::Below,
        lock.beta,
    ));

    let start = 0.25 * a.final_time();
    let d: Vec<f64> = a
        .ensembles
        .iter()
        .zip(&b.ensembles)
        .map(|(x, y)| inter_diameter(x, y))
        .collect::<Result<_>>()?;
    let mut excess = f64::NEG_INFINITY;
    for k in 1..d.len() - 1 {
        if a.times[k] >= start && d[k] > 1e-10 {
            let slope = (d[k + 1] - d[k - 1]) / (a.times[k + 1] - a.times[k - 1]);
            excess = excess.max(slope + rate * d[k]);
        }
    }
    v.check(Assertion::new(
        "inter_diameter_contraction",
        "max of d'(S, S~) + rate * d(S, S~) after the entrance time",
        excess,
        Comparison::AtMost,
        CONTRACTION_SLACK,
    ));
    v.observe("inter_diameter_decay_rate", -log_slope(a.times.iter().copied().zip(d.iter().copied()).filter(|p| p.0 >= start), 1e-10));
    v.observe("entrance_time", start);
    v.observe("final_diameter", a.diagnostics.last().map_or(f64::NAN, |r| r.d));

    let predicted_rho = (-rate * window).exp();
    v.observe("predicted_rho", predicted_rho);
    let mut opts = PhaseLockOptions::new(window, LOCK_TOL);
    opts.start = start;
    for (label, traj) in [("a", a), ("b", b)] {
        let report = phase_lock_detector_with(traj, &opts)?;
        v.observe(&format!("rho_{label}"), report.rho);
        v.check(Assertion::new(
            &format!("locked_final_increment_{label}"),
            "last window increment of the relative states S_i^T S_j",
            report.final_delta,
            Comparison::AtMost,
            LOCK_TOL,
        ));
        v.check(Assertion::new(
            &format!("locked_ratio_{label}"),
            "fitted window ratio rho of the increments",
            report.rho,
            Comparison::Below,
            1.0,
        ));
        let mismatch = (report.rho / predicted_rho).max(predicted_rho / report.rho);
        v.check(Assertion::new(
            &format!("rho_matches_prediction_{label}"),
            "max(rho / rho_pred, rho_pred / rho) with rho_pred = exp(-2 kappa (Lambda - 2 a_max sqrt(p) alpha) T)",
            mismatch,
            Comparison::AtMost,
            LOCK_RATIO_FACTOR,
        ));
        let red = reduced_velocity(&traj.final_state, &params, &topo)?;
        let mut spread: f64 = 0.0;
        for x in &red {
            for y in &red {
                spread = spread.max((x - y).norm());
            }
        }
        v.observe(&format!("normalized_velocity_spread_{label}"), spread);
        v.check(Assertion::new(
            &format!("normalized_velocities_{label}"),
            "max_ij ||S_i^T S_i' - S_j^T S_j'|| at the horizon divided by the last window increment",
            spread / report.final_delta,
            Comparison::AtMost,
            NORMALIZED_VELOCITY_FACTOR,
        ));
    }
    drift_assertion(&mut v, &[a, b]);
    let mut runs = Vec::new();
    for (label, traj) in ["trajectory_a", "trajectory_b"].into_iter().zip(trajs) {
        runs.push(ScenarioRun {
            label: label.into(),
            trajectory: traj,
        });
    }
    Ok(ScenarioReport { verdict: v, runs })
}

fn second_order_homogeneous(config: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut v = Verdict::new(config);
    let topo = config.topology.build(config.agents)?;
    let mut rng = rng_from_seed(config.seed);
    let states = initial_states(config, &mut rng, 1.0)?;
    let vel = tangent_velocities(&states, config.velocity_scale, &mut rng)?;
    let e0 = Ensemble::second_order(states, vel, 1e-10)?;
    let params = ModelParams::second_order(
        config.kappa,
        config.m,
        config.gamma,
        ModelParams::homogeneous_zero(config.agents, config.p),
    );
    let dt = second_order_dt(config, config.kappa, config.m);
    let icfg = integrator_config(dt, config.horizon(), config.record_every.unwrap_or(1)).without_ensembles();
    let traj = integrate(&e0, &params, &topo, &icfg)?;
    let last = traj.diagnostics.last().expect("non-empty trajectory");
    v.check(Assertion::new(
        "final_velocity",
        "max_i ||S_i'|| at the horizon",
        last.dvel.unwrap_or(f64::NAN),
        Comparison::AtMost,
        SECOND_ORDER_FINAL_TOL,
    ));
    v.check(Assertion::new(
        "final_g",
        "averaged squared distance G at the horizon",
        last.g,
        Comparison::AtMost,
        SECOND_ORDER_FINAL_TOL,
    ));
    if topo.stats().xi_constant {
        let mon = inequality_monitor_d25(&traj, &params, &topo)?;
        let worst = mon.iter().map(|s| s.residual).fold(f64::INFINITY, f64::min);
        v.check(Assertion::new(
            "g_inequality_residual",
            "min over samples of [16 m Dv^2 + ...] - [m G'' + gamma G' + 2 kappa xi G]",
            worst,
            Comparison::AtLeast,
            MONITOR_RESIDUAL_FLOOR,
        ));
    }
    let vb = velocity_bound_check(&traj, &params, &topo)?;
    v.check(Assertion::new(
        "velocity_bound",
        "sup_t max_i ||S_i'|| against max(initial speed, (||Xi|| + kappa a_max sqrt(p)) / gamma)",
        vb.sup,
        Comparison::AtMost,
        vb.bound + VELOCITY_BOUND_SLACK,
    ));
    let max_rise = energy_max_rise(&traj);
    v.check(Assertion::new(
        "energy_non_increasing",
        "largest increase of E = K + L between samples",
        max_rise,
        Comparison::AtMost,
        ENERGY_STEP_SLACK,
    ));
    drift_assertion(&mut v, &[&traj]);
    v.observe("dt", dt);
    Ok(ScenarioReport {
        verdict: v,
        runs: vec![ScenarioRun {
            label: "trajectory".into(),
            trajectory: traj,
        }],
    })
}

pub fn energy_max_rise(traj: &Trajectory) -> f64 {
    traj.diagnostics
        .windows(2)
        .filter_map(|w| Some(w[1].energy? - w[0].energy?))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Sweep member for one coupling strength.
struct SweepMember {
    kappa: f64,
    tail_g: f64,
    traj: Trajectory,
}

fn practical_consensus_sweep(config: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut v = Verdict::new(config);
    let topo = config.topology.build(config.agents)?;
    let stats = topo.stats();
    let mut rng = rng_from_seed(config.seed);
    let xis = heterogeneous_frequencies(config.p, config.agents, config.xi_scale, &mut rng)?;
    let states = initial_states(config, &mut rng, 1.0)?;
    let vel = tangent_velocities(&states, config.velocity_scale, &mut rng)?;
    let e0 = Ensemble::second_order(states, vel, 1e-10)?;
    let xi_inf = xis.iter().map(FrequencyMatrix::norm).fold(0.0, f64::max);

    let mut kappas = config.kappas();
    kappas.sort_by(f64::total_cmp);
    let units = config.horizon();
    let members: Vec<SweepMember> = kappas
        .par_iter()
        .map(|&kappa| {
            let m = config.m0 / kappa.powf(1.0 + config.eta);
            let params = ModelParams::second_order(kappa, m, config.gamma, xis.clone());
            let dt = second_order_dt(config, kappa, m);
            let steps = (units / kappa / dt).round().max(1.0) as usize;
            let every = config.record_every.unwrap_or((steps / 2000).max(1));
            let icfg = integrator_config(dt, units / kappa, every).without_ensembles();
            let traj = integrate(&e0, &params, &topo, &icfg)?;
            let t_end = traj.final_time();
            let tail: Vec<f64> = traj
                .diagnostics
                .iter()
                .filter(|r| r.t >= 0.75 * t_end)
                .map(|r| r.g)
                .collect();
            let tail_g = tail.iter().sum::<f64>() / tail.len() as f64;
            Ok(SweepMember { kappa, tail_g, traj })
        })
        .collect::<Result<_>>()?;

    let dvel0 = members[0].traj.diagnostics[0].dvel.unwrap_or(0.0);
    for mem in &members {
        v.observe(&format!("tail_g_kappa_{}", mem.kappa), mem.tail_g);
        let premise = (xi_inf + mem.kappa * stats.a_max * (config.p as f64).sqrt()) / config.gamma;
        v.check(Assertion::new(
            &format!("initial_velocity_premise_kappa_{}", mem.kappa),
            "initial max_i ||S_i'|| below (||Xi|| + kappa a_max sqrt(p)) / gamma",
            dvel0,
            Comparison::Below,
            premise,
        ));
    }
    let worst_ratio = members
        .windows(2)
        .map(|w| w[1].tail_g / w[0].tail_g)
        .fold(f64::NEG_INFINITY, f64::max);
    v.check(Assertion::new(
        "tail_g_decreasing",
        "largest ratio of tail-averaged G between consecutive kappas",
        worst_ratio,
        Comparison::Below,
        1.0,
    ));
    let slope = log_slope(members.iter().map(|m| (m.kappa.ln(), m.tail_g)), 0.0);
    v.check(Assertion::new(
        "tail_g_slope",
        "least-squares slope of log G_tail against log kappa",
        slope,
        Comparison::AtMost,
        -SWEEP_SLOPE_FACTOR * config.eta.min(1.0),
    ));
    let trajs: Vec<&Trajectory> = members.iter().map(|m| &m.traj).collect();
    drift_assertion(&mut v, &trajs);
    let runs = members
        .into_iter()
        .map(|m| ScenarioRun {
            label: format!("kappa_{}", m.kappa),
            trajectory: m.traj,
        })
        .collect();
    Ok(ScenarioReport { verdict: v, runs })
}

/// Largest Frobenius distance between corresponding states of two ensembles.
pub fn ensemble_distance(a: &Ensemble, b: &Ensemble) -> f64 {
    let states = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| (x.matrix() - y.matrix()).norm())
        .fold(0.0, f64::max);
    let vels = match (&a.velocities, &b.velocities) {
        (Some(va), Some(vb)) => va.iter().zip(vb).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max),
        _ => 0.0,
    };
    states.max(vels)
}

/// Final-state mismatch between integrating `L E0` and left-translating the
/// integrated `E0`.
pub fn left_translation_defect(e0: &Ensemble, l: &Matrix, params: &ModelParams, topo: &Topology, icfg: &IntegratorConfig) -> Result<f64> {
    let direct = integrate(e0, params, topo, icfg)?;
    let moved = integrate(&e0.left_translate(l)?, params, topo, icfg)?;
    Ok(ensemble_distance(&moved.final_state, &direct.final_state.left_translate(l)?))
}

/// Final-state mismatch between the flow with common frequency `xi` and the
/// frequency-free flow rotated by `exp(t xi)` (or `exp(t xi / gamma)`).
pub fn splitting_defect(e0: &Ensemble, xi: &FrequencyMatrix, params: &ModelParams, topo: &Topology, icfg: &IntegratorConfig) -> Result<f64> {
    let n_agents = e0.len();
    let with = ModelParams {
        xis: vec![xi.clone(); n_agents],
        ..params.clone()
    };
    let without = ModelParams {
        xis: vec![FrequencyMatrix::zero(xi.p()); n_agents],
        ..params.clone()
    };
    let order = if e0.is_second_order() {
        FlowOrder::Second
    } else {
        FlowOrder::First
    };
    let y0 = match &e0.velocities {
        None => e0.clone(),
        Some(vs) => {
            // Y' = S' - S Xi / gamma at t = 0
            let shifted = e0
                .states
                .iter()
                .zip(vs)
                .map(|(s, v)| v - s.matrix() * xi.matrix() / params.gamma)
                .collect();
            Ensemble {
                states: e0.states.clone(),
                velocities: Some(shifted),
            }
        }
    };
    let full = integrate(e0, &with, topo, icfg)?;
    let reduced = integrate(&y0, &without, topo, icfg)?;
    let t = full.final_time();
    let rot = crate::dynamics::frequency_rotation(xi, t, order, params.gamma);
    let rotated: Vec<StiefelPoint> = reduced
        .final_state
        .states
        .iter()
        .map(|s| StiefelPoint::new(s.matrix() * &rot, 1e-6))
        .collect::<Result<_>>()?;
    Ok(full
        .final_state
        .states
        .iter()
        .zip(&rotated)
        .map(|(a, b)| (a.matrix() - b.matrix()).norm())
        .fold(0.0, f64::max))
}

/// Max deviation between a `p = 1, n = 2` trajectory and the angle-lifted
/// Kuramoto trajectory integrated with the same steps.
pub fn kuramoto_trajectory_deviation(theta0: &[f64], kappa: f64, topo: &Topology, dt: f64, horizon: f64) -> Result<f64> {
    let states: Vec<StiefelPoint> = theta0
        .iter()
        .map(|t| StiefelPoint::new(Matrix::from_column_slice(2, 1, &[t.cos(), t.sin()]), 1e-12))
        .collect::<Result<_>>()?;
    let e0 = Ensemble::first_order(states)?;
    let params = ModelParams::first_order(kappa, ModelParams::homogeneous_zero(theta0.len(), 1));
    let icfg = integrator_config(dt, horizon, 1);
    let traj = integrate(&e0, &params, topo, &icfg)?;
    let nu = vec![0.0; theta0.len()];
    let mut theta = theta0.to_vec();
    let mut worst: f64 = 0.0;
    for (k, e) in traj.ensembles.iter().enumerate() {
        if k > 0 {
            theta = rk4_step(&theta, dt, |th| rhs_kuramoto(th, &nu, topo, kappa).expect("sizes checked"))?;
        }
        for (s, th) in e.states.iter().zip(&theta) {
            let x = s.matrix();
            worst = worst.max(((x[(0, 0)] - th.cos()).powi(2) + (x[(1, 0)] - th.sin()).powi(2)).sqrt());
        }
    }
    Ok(worst)
}

fn max_rhs_gap(a: &[Matrix], b: &[Matrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn invariance_checks(config: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut v = Verdict::new(config);
    let topo = config.topology.build(config.agents)?;
    let (n, p, na) = (config.n, config.p, config.agents);
    let mut rng = rng_from_seed(config.seed);
    let xis = heterogeneous_frequencies(p, na, config.xi_scale, &mut rng)?;
    let common = homogeneous_frequencies(p, 1, if config.xi_scale > 0.0 { config.xi_scale } else { 1.0 }, &mut rng)?
        .pop()
        .expect("one frequency");
    let states = initial_states(config, &mut rng, 1.0)?;
    let vel = tangent_velocities(&states, config.velocity_scale, &mut rng)?;
    let l = random_stiefel_with(n, n, &mut rng)?.into_matrix();
    let first = Ensemble::first_order(states.clone())?;
    let second = Ensemble::second_order(states, vel, 1e-10)?;
    let p1 = ModelParams::first_order(config.kappa, xis.clone());
    let p2 = ModelParams::second_order(config.kappa, config.m, config.gamma, xis);
    let horizon = config.horizon();
    let every = config.record_every.unwrap_or(100);
    let cfg1 = integrator_config(first_order_dt(config, config.kappa), horizon, every);
    let cfg2 = integrator_config(second_order_dt(config, config.kappa, config.m), horizon, every);

    let property = "final-state distance between the flow of L E0 and L times the flow of E0";
    v.check(Assertion::new(
        "left_translation_first_order",
        property,
        left_translation_defect(&first, &l, &p1, &topo, &cfg1)?,
        Comparison::AtMost,
        TRANSFORM_TOL,
    ));
    v.check(Assertion::new(
        "left_translation_second_order",
        property,
        left_translation_defect(&second, &l, &p2, &topo, &cfg2)?,
        Comparison::AtMost,
        TRANSFORM_TOL,
    ));
    let property = "final-state distance between the flow with common Xi and the rotated Xi-free flow";
    v.check(Assertion::new(
        "splitting_first_order",
        property,
        splitting_defect(&first, &common, &p1, &topo, &cfg1)?,
        Comparison::AtMost,
        TRANSFORM_TOL,
    ));
    v.check(Assertion::new(
        "splitting_second_order",
        property,
        splitting_defect(&second, &common, &p2, &topo, &cfg2)?,
        Comparison::AtMost,
        TRANSFORM_TOL,
    ));

    if p == 1 {
        let x: Vec<Matrix> = first.state_matrices();
        let zero_first = ModelParams::first_order(config.kappa, ModelParams::homogeneous_zero(na, 1));
        let stiefel = rhs_first_order(&first, &zero_first, &topo)?;
        let sphere = rhs_sphere(&x, &vec![Matrix::zeros(n, n); na], &topo, config.kappa)?;
        v.check(Assertion::new(
            "sphere_reduction",
            "pointwise gap between the p = 1 frame field and the sphere field",
            max_rhs_gap(&stiefel, &sphere),
            Comparison::AtMost,
            RHS_REDUCTION_TOL,
        ));
        if n == 2 {
            let theta: Vec<f64> = x.iter().map(|xi| xi[(1, 0)].atan2(xi[(0, 0)])).collect();
            let rates = rhs_kuramoto(&theta, &vec![0.0; na], &topo, config.kappa)?;
            let lifted = stiefel
                .iter()
                .zip(&theta)
                .zip(&rates)
                .map(|((s, th), r)| ((s[(0, 0)] + r * th.sin()).powi(2) + (s[(1, 0)] - r * th.cos()).powi(2)).sqrt())
                .fold(0.0, f64::max);
            v.check(Assertion::new(
                "kuramoto_rhs_reduction",
                "pointwise gap between the p = 1, n = 2 field and the angle-lifted phase field",
                lifted,
                Comparison::AtMost,
                RHS_REDUCTION_TOL,
            ));
            v.check(Assertion::new(
                "kuramoto_trajectory_reduction",
                "max gap along trajectories between the p = 1, n = 2 flow and the lifted phase flow",
                kuramoto_trajectory_deviation(&theta, config.kappa, &topo, cfg1.dt, horizon)?,
                Comparison::AtMost,
                TRAJECTORY_REDUCTION_TOL,
            ));
        }
    }
    if p == n {
        let r = first.state_matrices();
        let zero_first = ModelParams::first_order(config.kappa, ModelParams::homogeneous_zero(na, p));
        let stiefel = rhs_first_order(&first, &zero_first, &topo)?;
        let so = rhs_so_n(&r, &vec![Matrix::zeros(n, n); na], &topo, config.kappa)?;
        v.check(Assertion::new(
            "orthogonal_group_reduction",
            "pointwise gap between the p = n frame field and the orthogonal-group field",
            max_rhs_gap(&stiefel, &so),
            Comparison::AtMost,
            RHS_REDUCTION_TOL,
        ));
    }

    let traj2 = integrate(&second, &p2, &topo, &cfg2)?;
    let vb = velocity_bound_check(&traj2, &p2, &topo)?;
    v.check(Assertion::new(
        "velocity_bound",
        "sup_t max_i ||S_i'|| against max(initial speed, (||Xi|| + kappa a_max sqrt(p)) / gamma)",
        vb.sup,
        Comparison::AtMost,
        vb.bound + VELOCITY_BOUND_SLACK,
    ));

    let traj1 = integrate(&first, &p1, &topo, &cfg1)?;
    let shift = shift_defect(&traj1, &p1, &topo, &cfg1)?;
    v.check(Assertion::new(
        "time_shift",
        "gap between restarting from a mid-run sample and the original tail",
        shift,
        Comparison::AtMost,
        SHIFT_TOL,
    ));
    drift_assertion(&mut v, &[&traj1, &traj2]);
    Ok(ScenarioReport {
        verdict: v,
        runs: vec![
            ScenarioRun {
                label: "first_order".into(),
                trajectory: traj1,
            },
            ScenarioRun {
                label: "second_order".into(),
                trajectory: traj2,
            },
        ],
    })
}

/// Restart from the recorded sample nearest the middle of the run and
/// compare the end states.
pub fn shift_defect(traj: &Trajectory, params: &ModelParams, topo: &Topology, icfg: &IntegratorConfig) -> Result<f64> {
    if traj.ensembles.len() < 3 {
        return Err(Error::InsufficientHorizon("need a stored mid-run sample".into()));
    }
    let mid = traj.ensembles.len() / 2;
    let t_mid = traj.times[mid];
    let rest = traj.final_time() - t_mid;
    let steps = (rest / icfg.dt).round();
    let restart_cfg = IntegratorConfig {
        horizon: steps * icfg.dt,
        ..icfg.clone()
    };
    let tail = integrate(&traj.ensembles[mid], params, topo, &restart_cfg)?;
    Ok(ensemble_distance(&tail.final_state, &traj.final_state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_slope_of_exponential() {
        let pts = (0..10).map(|k| (k as f64, (-(k as f64) * 0.7).exp()));
        assert!((log_slope(pts, 0.0) + 0.7).abs() < 1e-12);
        assert!(log_slope([(0.0, 1.0)], 0.0).is_nan());
    }

    #[test]
    fn small_homogeneous_run_passes() {
        let c = ScenarioConfig::from_json(
            r#"{"scenario":"first_order_homogeneous","n":3,"p":1,"N":4,"kappa":5,"horizon":10,"dt":0.002}"#,
        )
        .unwrap();
        let r = execute(&c).unwrap();
        assert!(r.verdict.passed, "{:#?}", r.verdict.assertions);
    }

    #[test]
    fn invariance_checks_small() {
        let c = ScenarioConfig::from_json(
            r#"{"scenario":"invariance_checks","n":2,"p":1,"N":4,"horizon":2,"velocity_scale":0.3}"#,
        )
        .unwrap();
        let r = execute(&c).unwrap();
        assert!(r.verdict.passed, "{:#?}", r.verdict.assertions);
        assert!(r.verdict.assertion("kuramoto_trajectory_reduction").is_some());
    }
}
