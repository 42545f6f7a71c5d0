//! Functionals of an ensemble, analytic thresholds and trajectory monitors.

mod functionals;
mod monitors;
mod thresholds;

use serde::Serialize;

pub use functionals::{
    diameter, diameter_of, energy, energy_dissipation_rhs, g_functional, g_functional_of, gram_defect,
    inter_diameter, relative_states, velocity_diameter, Diameter, Energies, GramDefect,
};
pub use monitors::{
    inequality_monitor_d25, phase_lock_detector, phase_lock_detector_with, velocity_bound_check, MonitorSample,
    PhaseLockOptions, PhaseLockReport, VelocityBoundReport, MIN_LOCK_WINDOWS, VELOCITY_BOUND_SLACK,
};
pub use thresholds::{gronwall_bound, lock_thresholds, GronwallBound, LockThresholds};

use crate::dynamics::{Ensemble, ModelParams};
use crate::network::Topology;

/// One sample of a trajectory. Velocity and energy fields are `None` for the
/// first-order model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub d: f64,
    pub dvel: Option<f64>,
    pub g: f64,
    pub kinetic: Option<f64>,
    pub interaction: Option<f64>,
    pub energy: Option<f64>,
    pub max_drift: f64,
    pub xi_inf: f64,
}

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_COLUMNS: [&str; 8] = ["t", "D", "Dvel", "G", "K", "L", "E", "maxDrift"];

impl DiagnosticsRecord {
    pub fn csv_header() -> String {
        format!(
            "# stiefel-sync diagnostics v{CSV_SCHEMA_VERSION}\n{}",
            CSV_COLUMNS.join(",")
        )
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        format!(
            "{:e},{:e},{},{:e},{},{},{},{:e}",
            self.t,
            self.d,
            opt(self.dvel),
            self.g,
            opt(self.kinetic),
            opt(self.interaction),
            opt(self.energy),
            self.max_drift
        )
    }
}

pub fn record(e: &Ensemble, params: &ModelParams, topo: &Topology, t: f64, max_drift: f64) -> DiagnosticsRecord {
    let energies = e
        .velocities
        .as_ref()
        .map(|v| functionals::energies_unchecked(e, v, params, topo));
    DiagnosticsRecord {
        t,
        d: diameter(e).value,
        dvel: velocity_diameter(e),
        g: g_functional(e),
        kinetic: energies.map(|x| x.kinetic),
        interaction: energies.map(|x| x.interaction),
        energy: energies.map(|x| x.total),
        max_drift,
        xi_inf: params.xi_inf(),
    }
}
