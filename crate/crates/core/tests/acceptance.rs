//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use stiefel_consensus::diagnostics::{energy_dissipation_rhs, gronwall_bound};
use stiefel_consensus::dynamics::{rhs_first_order, rhs_sphere, Ensemble, ModelParams};
use stiefel_consensus::integrator::{integrate, rk4_step, step_rk4, IntegratorConfig};
use stiefel_consensus::network::Topology;
use stiefel_consensus::scenario::init::{heterogeneous_frequencies, homogeneous_frequencies, tangent_velocities, uniform, Cluster};
use stiefel_consensus::scenario::runner::{
    energy_max_rise, kuramoto_trajectory_deviation, left_translation_defect, splitting_defect,
};
use stiefel_consensus::scenario::{execute, ScenarioConfig, ScenarioReport};
use stiefel_consensus::stiefel::{exp_skew, random_skew_with, random_stiefel_with, rng_from_seed, Matrix};
use stiefel_consensus::Result;

const C1_DRIFT: f64 = 1e-8;
const C1_RUNTIME: Duration = Duration::from_secs(30);
const C2_STEP_SLACK: f64 = 1e-10;
const C2_RATE_SLACK: f64 = 1e-4;
const C2_FINAL: f64 = 1e-6;
const C3_RHS: f64 = 1e-12;
const C3_TRAJECTORY: f64 = 1e-8;
const C4_DEFECT: f64 = 1e-8;
const C5_HALVING_RATIO: f64 = 3.5;
const C5_ENERGY_STEP: f64 = 1e-10;
const C6_FINAL: f64 = 1e-5;
const C6_RESIDUAL: f64 = -1e-6;
const C7_RHO_FACTOR: f64 = 2.0;
const C7_SPREAD_FACTOR: f64 = 10.0;
const C8_SLOPE: f64 = -0.8;
const C8_RUNTIME: Duration = Duration::from_secs(300);
const C9_BOUND_SLACK: f64 = 1e-8;
const C9_LIMSUP_SLACK: f64 = 1e-6;
const C9_SAMPLES: usize = 20;
const C10_ORDER: f64 = 4.5;

type Criterion = (&'static str, &'static str, fn() -> Result<Outcome>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn config(json: &str) -> ScenarioConfig {
    ScenarioConfig::from_json(json).expect("acceptance config parses")
}

fn measured(report: &ScenarioReport, name: &str) -> f64 {
    report
        .verdict
        .assertion(name)
        .unwrap_or_else(|| panic!("scenario did not report {name}"))
        .measured
}

fn fitted_order(dts: &[f64], errs: &[f64]) -> f64 {
    let n = dts.len() as f64;
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn c1_manifold_invariance() -> Result<Outcome> {
    let (n, p, na) = (4, 2, 10);
    let topo = Topology::all_to_all(na)?;
    let mut rng = rng_from_seed(101);
    let states = Cluster::sample(n, p, na, &mut rng)?.with_diameter(1.0)?;
    let xis = heterogeneous_frequencies(p, na, 0.5, &mut rng)?;
    let vel = tangent_velocities(&states, 0.5, &mut rng)?;
    let cfg = IntegratorConfig::new(1e-3, 50.0, 100).without_ensembles();
    let start = Instant::now();
    let first = integrate(
        &Ensemble::first_order(states.clone())?,
        &ModelParams::first_order(1.0, xis.clone()),
        &topo,
        &cfg,
    )?;
    let second = integrate(
        &Ensemble::second_order(states, vel, 1e-10)?,
        &ModelParams::second_order(1.0, 1.0, 2.0, xis),
        &topo,
        &cfg,
    )?;
    let elapsed = start.elapsed();
    let drift = first.max_drift.max(second.max_drift);
    outcome(
        drift <= C1_DRIFT && elapsed < C1_RUNTIME,
        format!(
            "max drift {drift:.2e} (first {:.2e}, second {:.2e}) <= {C1_DRIFT:e}; repairs {} + {}; {:.1}s < {}s",
            first.max_drift,
            second.max_drift,
            first.repairs,
            second.repairs,
            elapsed.as_secs_f64(),
            C1_RUNTIME.as_secs()
        ),
    )
}

fn c2_complete_consensus() -> Result<Outcome> {
    let r = execute(&config(
        r#"{"scenario":"first_order_homogeneous","n":4,"p":2,"N":8,"kappa":1,"initial_diameter":1.0,"horizon":50,"dt":0.001,"record_every":10}"#,
    ))?;
    let d0 = measured(&r, "initial_diameter");
    let rise = measured(&r, "diameter_non_increasing");
    let rate = measured(&r, "diameter_decay_inequality");
    let fin = measured(&r, "final_diameter");
    outcome(
        (d0 - 1.0).abs() < 1e-12 && rise <= C2_STEP_SLACK && rate <= C2_RATE_SLACK && fin <= C2_FINAL,
        format!(
            "D0 {d0:.6}; max rise {rise:.2e} <= {C2_STEP_SLACK:e}; max rate excess {rate:.2e} <= {C2_RATE_SLACK:e}; D(50) {fin:.2e} <= {C2_FINAL:e}"
        ),
    )
}

fn c3_reductions() -> Result<Outcome> {
    let na = 6;
    let topo = Topology::all_to_all(na)?;
    let mut rng = rng_from_seed(303);
    let params = ModelParams::first_order(1.0, ModelParams::homogeneous_zero(na, 1));
    let mut rhs_gap: f64 = 0.0;
    for _ in 0..50 {
        let e = Ensemble::first_order(uniform(3, 1, na, &mut rng)?)?;
        let stiefel = rhs_first_order(&e, &params, &topo)?;
        let sphere = rhs_sphere(&e.state_matrices(), &vec![Matrix::zeros(3, 3); na], &topo, 1.0)?;
        for (a, b) in stiefel.iter().zip(&sphere) {
            rhs_gap = rhs_gap.max((a - b).amax());
        }
    }
    let theta: Vec<f64> = (0..na).map(|_| rng.random_range(-3.0..3.0)).collect();
    let traj_gap = kuramoto_trajectory_deviation(&theta, 1.0, &topo, 1e-3, 10.0)?;
    outcome(
        rhs_gap <= C3_RHS && traj_gap <= C3_TRAJECTORY,
        format!("sphere RHS gap {rhs_gap:.2e} <= {C3_RHS:e}; Kuramoto trajectory gap {traj_gap:.2e} <= {C3_TRAJECTORY:e}"),
    )
}

fn c4_transformations() -> Result<Outcome> {
    let (n, p, na) = (4, 2, 6);
    let topo = Topology::all_to_all(na)?;
    let mut rng = rng_from_seed(404);
    let states = Cluster::sample(n, p, na, &mut rng)?.with_diameter(1.0)?;
    let vel = tangent_velocities(&states, 0.3, &mut rng)?;
    let xis = heterogeneous_frequencies(p, na, 0.5, &mut rng)?;
    let common = homogeneous_frequencies(p, 1, 1.0, &mut rng)?.remove(0);
    let l = random_stiefel_with(n, n, &mut rng)?.into_matrix();
    let first = Ensemble::first_order(states.clone())?;
    let second = Ensemble::second_order(states, vel, 1e-10)?;
    let p1 = ModelParams::first_order(1.0, xis.clone());
    let p2 = ModelParams::second_order(1.0, 1.0, 2.0, xis);
    let cfg = IntegratorConfig::new(1e-3, 10.0, 1000);
    let defects = [
        ("left/1st", left_translation_defect(&first, &l, &p1, &topo, &cfg)?),
        ("left/2nd", left_translation_defect(&second, &l, &p2, &topo, &cfg)?),
        ("split/1st", splitting_defect(&first, &common, &p1, &topo, &cfg)?),
        ("split/2nd", splitting_defect(&second, &common, &p2, &topo, &cfg)?),
    ];
    let worst = defects.iter().map(|d| d.1).fold(0.0, f64::max);
    let listed: Vec<String> = defects.iter().map(|(k, v)| format!("{k} {v:.2e}")).collect();
    outcome(worst <= C4_DEFECT, format!("{} (all <= {C4_DEFECT:e})", listed.join(", ")))
}

fn c5_energy_identity() -> Result<Outcome> {
    let (n, p, na) = (4, 2, 8);
    let topo = Topology::all_to_all(na)?;
    let mut rng = rng_from_seed(3);
    let states = Cluster::sample(n, p, na, &mut rng)?.with_diameter(1.0)?;
    let xis = heterogeneous_frequencies(p, na, 0.5, &mut rng)?;
    let vel = tangent_velocities(&states, 0.5, &mut rng)?;
    let e0 = Ensemble::second_order(states, vel, 1e-10)?;
    let params = ModelParams::second_order(1.0, 1.0, 2.0, xis);
    let dts = [1e-2, 5e-3, 2.5e-3];
    let mut errs = Vec::new();
    for dt in dts {
        let traj = integrate(&e0, &params, &topo, &IntegratorConfig::new(dt, 5.0, 1))?;
        let recs = &traj.diagnostics;
        let mut err: f64 = 0.0;
        for k in 1..recs.len() - 1 {
            let fd = (recs[k + 1].energy.unwrap() - recs[k - 1].energy.unwrap()) / (2.0 * dt);
            err = err.max((fd - energy_dissipation_rhs(&traj.ensembles[k], &params)?).abs());
        }
        errs.push(err);
    }
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
    let homogeneous = ModelParams::second_order(1.0, 1.0, 2.0, ModelParams::homogeneous_zero(na, p));
    let traj = integrate(&e0, &homogeneous, &topo, &IntegratorConfig::new(1e-3, 10.0, 1).without_ensembles())?;
    let rise = energy_max_rise(&traj);
    outcome(
        ratios.iter().all(|&r| r >= C5_HALVING_RATIO) && rise <= C5_ENERGY_STEP,
        format!(
            "FD errors {:.2e}, {:.2e}, {:.2e}; halving ratios {:.2}, {:.2} >= {C5_HALVING_RATIO}; homogeneous max energy rise {rise:.2e} <= {C5_ENERGY_STEP:e}",
            errs[0], errs[1], errs[2], ratios[0], ratios[1]
        ),
    )
}

fn c6_second_order_consensus() -> Result<Outcome> {
    let r = execute(&config(
        r#"{"scenario":"second_order_homogeneous","n":4,"p":2,"N":8,"kappa":1,"m":1,"gamma":2,"velocity_scale":0.5,"horizon":100,"dt":0.001,"record_every":1}"#,
    ))?;
    let dv = measured(&r, "final_velocity");
    let g = measured(&r, "final_g");
    let res = measured(&r, "g_inequality_residual");
    outcome(
        dv <= C6_FINAL && g <= C6_FINAL && res >= C6_RESIDUAL && r.verdict.passed,
        format!(
            "Dvel(100) {dv:.2e}, G(100) {g:.2e} <= {C6_FINAL:e}; min residual {res:.2e} >= {C6_RESIDUAL:e}; velocity bound and energy monotonicity {}",
            if r.verdict.passed { "hold" } else { "fail" }
        ),
    )
}

fn c7_phase_locking() -> Result<Outcome> {
    let r = execute(&config(
        r#"{"scenario":"first_order_locking","n":4,"p":2,"N":4,"kappa":3,"xi_scale":0.1,"seed":1,"horizon":8,"dt":0.001,"record_every":10,"window":0.15}"#,
    ))?;
    let v = &r.verdict;
    let mut lines = Vec::new();
    let mut ok = v.passed;
    for label in ["a", "b"] {
        let rho = v.observation(&format!("rho_{label}")).unwrap_or(f64::NAN);
        let mismatch = measured(&r, &format!("rho_matches_prediction_{label}"));
        let cor = measured(&r, &format!("normalized_velocities_{label}"));
        ok &= rho < 1.0 && mismatch <= C7_RHO_FACTOR && cor <= C7_SPREAD_FACTOR;
        lines.push(format!(
            "run {label}: rho {rho:.3} (mismatch x{mismatch:.2} <= {C7_RHO_FACTOR}), spread/delta {cor:.2} <= {C7_SPREAD_FACTOR}"
        ));
    }
    outcome(
        ok,
        format!(
            "kappa 3 > kappa_* {:.3}; D0 {:.3} < beta {:.3}; rho_pred {:.3}; {}",
            v.observation("kappa_star").unwrap_or(f64::NAN),
            measured(&r, "initial_diameter_below_beta"),
            v.observation("beta").unwrap_or(f64::NAN),
            v.observation("predicted_rho").unwrap_or(f64::NAN),
            lines.join("; ")
        ),
    )
}

fn c8_practical_consensus() -> Result<Outcome> {
    let start = Instant::now();
    let r = execute(&config(
        r#"{"scenario":"practical_consensus_sweep","n":4,"p":2,"N":8,"gamma":1,"xi_scale":0.1,"eta":1,"m0":1,"kappas":[10,100,1000]}"#,
    ))?;
    let elapsed = start.elapsed();
    let ratio = measured(&r, "tail_g_decreasing");
    let slope = measured(&r, "tail_g_slope");
    let tails: Vec<String> = [10, 100, 1000]
        .iter()
        .map(|k| format!("{:.2e}", r.verdict.observation(&format!("tail_g_kappa_{k}")).unwrap_or(f64::NAN)))
        .collect();
    outcome(
        ratio < 1.0 && slope <= C8_SLOPE && elapsed < C8_RUNTIME && r.verdict.passed,
        format!(
            "tail G {}; max ratio {ratio:.3} < 1; slope {slope:.3} <= {C8_SLOPE}; {:.1}s < {}s",
            tails.join(", "),
            elapsed.as_secs_f64(),
            C8_RUNTIME.as_secs()
        ),
    )
}

/// Integrates `a y'' + b y' + c y = eps0` with RK4 at `dt = 1e-4` on [0, 20];
/// returns the largest excess over the envelope, `y(20)` and whether `y >= 0` throughout.
fn gronwall_case(a: f64, b: f64, c: f64, eps0: f64, y0: f64, yp0: f64) -> Result<(f64, f64, bool)> {
    let dt = 1e-4;
    let steps = 200_000;
    let mut y = vec![y0, yp0];
    let mut excess = f64::NEG_INFINITY;
    let mut nonneg = y0 >= 0.0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        excess = excess.max(y[0] - gronwall_bound(a, b, c, eps0, y0, yp0, t)?.bound_at_t);
        nonneg &= y[0] >= 0.0;
        if k < steps {
            y = rk4_step(&y, dt, |s: &Vec<f64>| vec![s[1], (eps0 - b * s[1] - c * s[0]) / a])?;
        }
    }
    Ok((excess, y[0], nonneg))
}

fn c9_gronwall() -> Result<Outcome> {
    let mut rng = rng_from_seed(909);
    let mut summary = Vec::new();
    let mut ok = true;
    for overdamped in [true, false] {
        let (mut accepted, mut rejected) = (0, 0);
        let (mut worst_excess, mut worst_limsup) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        while accepted < C9_SAMPLES {
            let a: f64 = rng.random_range(0.2..2.0);
            let b: f64 = rng.random_range(0.5..6.0);
            let c: f64 = rng.random_range(0.1..5.0);
            let disc = b * b - 4.0 * a * c;
            if (disc > 0.0) != overdamped {
                continue;
            }
            // the slowest mode must settle within the horizon for the limsup check
            let slowest = if overdamped {
                (b - disc.sqrt()) / (2.0 * a)
            } else {
                b / (2.0 * a)
            };
            if slowest < 1.5 {
                continue;
            }
            let eps0 = rng.random_range(0.0..2.0);
            let y0 = rng.random_range(0.0..2.0);
            let yp0 = rng.random_range(-2.0..2.0);
            let (excess, y_end, nonneg) = gronwall_case(a, b, c, eps0, y0, yp0)?;
            if !nonneg {
                rejected += 1;
                continue;
            }
            accepted += 1;
            let limsup = gronwall_bound(a, b, c, eps0, y0, yp0, 0.0)?.limsup_bound;
            worst_excess = worst_excess.max(excess);
            worst_limsup = worst_limsup.max(y_end - limsup);
        }
        ok &= worst_excess <= C9_BOUND_SLACK && worst_limsup <= C9_LIMSUP_SLACK;
        summary.push(format!(
            "{}: max excess {worst_excess:.2e} <= {C9_BOUND_SLACK:e}, y(20) - limsup {worst_limsup:.2e} <= {C9_LIMSUP_SLACK:e} ({rejected} negative-y draws skipped)",
            if overdamped { "overdamped" } else { "underdamped" }
        ));
    }
    outcome(ok, summary.join("; "))
}

fn c10_rk4_order() -> Result<Outcome> {
    let mut rng = rng_from_seed(1010);
    let s0 = random_stiefel_with(5, 3, &mut rng)?;
    let raw = random_skew_with(3, 1.0, &mut rng)?;
    let xi = raw.scaled(5.0 / raw.norm());
    let params = ModelParams::first_order(0.0, vec![xi.clone()]);
    let topo = Topology::all_to_all(1)?;
    let e0 = Ensemble::first_order(vec![s0.clone()])?;
    let dts = [1e-2, 5e-3, 2.5e-3];
    let mut local = Vec::new();
    let mut global = Vec::new();
    for dt in dts {
        let one = step_rk4(&e0, &params, &topo, dt)?;
        local.push((one.states[0].matrix() - s0.matrix() * exp_skew(&xi, dt)).norm());
        let cfg = IntegratorConfig::new(dt, 1.0, usize::MAX).without_ensembles();
        let traj = integrate(&e0, &params, &topo, &cfg)?;
        global.push((traj.final_state.states[0].matrix() - s0.matrix() * exp_skew(&xi, 1.0)).norm());
    }
    let order = fitted_order(&dts, &local);
    let global_order = fitted_order(&dts, &global);
    outcome(
        order >= C10_ORDER,
        format!(
            "one-step errors {:.2e}, {:.2e}, {:.2e}; fitted order {order:.2} >= {C10_ORDER} (error at t = 1 has order {global_order:.2})",
            local[0], local[1], local[2]
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("C1", "manifold invariance", c1_manifold_invariance),
        ("C2", "complete consensus, homogeneous first order", c2_complete_consensus),
        ("C3", "sphere and Kuramoto reductions", c3_reductions),
        ("C4", "left translation and splitting", c4_transformations),
        ("C5", "energy dissipation identity", c5_energy_identity),
        ("C6", "second-order homogeneous consensus", c6_second_order_consensus),
        ("C7", "phase locking", c7_phase_locking),
        ("C8", "practical consensus under small inertia", c8_practical_consensus),
        ("C9", "second-order Gronwall envelope", c9_gronwall),
        ("C10", "RK4 order", c10_rk4_order),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (id, title, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!passed);
        println!(
            "{} {id} {title} [{:.1}s]: {detail}",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
