use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    FirstOrderHomogeneous,
    FirstOrderLocking,
    SecondOrderHomogeneous,
    PracticalConsensusSweep,
    InvarianceChecks,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::FirstOrderHomogeneous => "first_order_homogeneous",
            ScenarioKind::FirstOrderLocking => "first_order_locking",
            ScenarioKind::SecondOrderHomogeneous => "second_order_homogeneous",
            ScenarioKind::PracticalConsensusSweep => "practical_consensus_sweep",
            ScenarioKind::InvarianceChecks => "invariance_checks",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySpec {
    AllToAll,
    Weights(Vec<Vec<f64>>),
}

impl TopologySpec {
    pub fn build(&self, n_agents: usize) -> Result<Topology> {
        match self {
            TopologySpec::AllToAll => Topology::all_to_all(n_agents),
            TopologySpec::Weights(rows) => {
                if rows.len() != n_agents {
                    return Err(Error::Config(format!(
                        "topology has {} rows but N = {n_agents}",
                        rows.len()
                    )));
                }
                Topology::from_rows(rows)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Clustered,
    Uniform,
}

fn default_kappa() -> f64 {
    1.0
}
fn default_m() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    2.0
}
fn default_one() -> f64 {
    1.0
}
fn default_topology() -> TopologySpec {
    TopologySpec::AllToAll
}
fn default_init() -> InitKind {
    InitKind::Clustered
}
fn default_velocity_scale() -> f64 {
    0.1
}

/// One scenario run, read from a JSON document. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "N")]
    pub agents: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Largest Frobenius norm among the frequency matrices.
    #[serde(default)]
    pub xi_scale: f64,
    /// Inertia exponent of the sweep, `m = m0 / kappa^(1 + eta)`.
    #[serde(default = "default_one")]
    pub eta: f64,
    #[serde(default = "default_one")]
    pub m0: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Model time; for the sweep, in units of `1/kappa`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_topology")]
    pub topology: TopologySpec,
    #[serde(default = "default_init")]
    pub init: InitKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_diameter: Option<f64>,
    #[serde(default = "default_velocity_scale")]
    pub velocity_scale: f64,
    /// Phase-lock window length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    /// Coupling strengths of the sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappas: Option<Vec<f64>>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn is_second_order(&self) -> bool {
        matches!(
            self.scenario,
            ScenarioKind::SecondOrderHomogeneous | ScenarioKind::PracticalConsensusSweep
        )
    }

    /// `min(1e-3, 1e-2/kappa)`, further capped at `0.1 m/gamma` for the
    /// second-order model so that RK4 resolves the friction time scale.
    pub fn default_dt(kappa: f64, second_order: Option<(f64, f64)>) -> f64 {
        let mut dt = 1e-3f64.min(1e-2 / kappa.max(f64::MIN_POSITIVE));
        if let Some((m, gamma)) = second_order {
            dt = dt.min(0.1 * m / gamma);
        }
        dt
    }

    pub fn default_horizon(&self) -> f64 {
        match self.scenario {
            ScenarioKind::FirstOrderHomogeneous => 50.0,
            ScenarioKind::FirstOrderLocking => 8.0,
            ScenarioKind::SecondOrderHomogeneous => 100.0,
            ScenarioKind::PracticalConsensusSweep => 20.0,
            ScenarioKind::InvarianceChecks => 10.0,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or_else(|| self.default_horizon())
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.kappas.clone().unwrap_or_else(|| vec![10.0, 100.0, 1000.0])
    }

    /// Every constraint that can be checked before a run.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.p == 0 || self.n == 0 {
            return fail("n and p must be positive".into());
        }
        if self.p > self.n {
            return fail(format!("p = {} exceeds n = {}: frames need p <= n", self.p, self.n));
        }
        if self.agents == 0 {
            return fail("N must be at least 1".into());
        }
        for (name, v) in [("kappa", self.kappa), ("xi_scale", self.xi_scale), ("velocity_scale", self.velocity_scale)] {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return fail(format!("gamma must be positive, got {}", self.gamma));
        }
        let uses_m = matches!(
            self.scenario,
            ScenarioKind::SecondOrderHomogeneous | ScenarioKind::InvarianceChecks
        );
        if uses_m && !(self.m > 0.0) {
            return fail(format!("m must be positive for the second-order model, got {}", self.m));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return fail(format!("dt must be positive, got {dt}"));
            }
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                return fail(format!("horizon must be positive, got {h}"));
            }
        }
        if self.record_every == Some(0) {
            return fail("record_every must be positive".into());
        }
        if let Some(d) = self.initial_diameter {
            if !(d > 0.0) {
                return fail(format!("initial_diameter must be positive, got {d}"));
            }
            if self.init == InitKind::Uniform {
                return fail("initial_diameter applies only to clustered initial data".into());
            }
        }
        if let Some(w) = self.window {
            if !(w > 0.0) {
                return fail(format!("window must be positive, got {w}"));
            }
        }
        self.topology.build(self.agents).map_err(|e| Error::Config(e.to_string()))?;

        match self.scenario {
            ScenarioKind::FirstOrderHomogeneous => {
                if self.xi_scale != 0.0 {
                    return fail("first_order_homogeneous requires xi_scale = 0".into());
                }
                if self.init != InitKind::Clustered {
                    return fail("first_order_homogeneous requires clustered initial data".into());
                }
                let d = self.initial_diameter.unwrap_or(1.0);
                if d >= 2.0f64.sqrt() {
                    return fail(format!("initial_diameter {d} must be below sqrt(2)"));
                }
                if self.agents < 2 {
                    return fail("first_order_homogeneous needs N >= 2".into());
                }
            }
            ScenarioKind::FirstOrderLocking => {
                if !(self.xi_scale > 0.0) {
                    return fail("first_order_locking requires xi_scale > 0".into());
                }
                if self.p < 2 {
                    return fail("first_order_locking requires p >= 2 (frequencies vanish at p = 1)".into());
                }
                if self.init != InitKind::Clustered || self.agents < 2 {
                    return fail("first_order_locking requires clustered initial data and N >= 2".into());
                }
            }
            ScenarioKind::SecondOrderHomogeneous => {
                if self.xi_scale != 0.0 {
                    return fail("second_order_homogeneous requires xi_scale = 0".into());
                }
                if self.agents < 2 {
                    return fail("second_order_homogeneous needs N >= 2".into());
                }
            }
            ScenarioKind::PracticalConsensusSweep => {
                let kappas = self.kappas();
                if kappas.len() < 2 {
                    return fail("practical_consensus_sweep needs at least two kappas".into());
                }
                if kappas.iter().any(|k| !(*k > 0.0)) {
                    return fail("kappas must be positive".into());
                }
                if !(self.m0 > 0.0) || !(self.eta > -1.0) {
                    return fail("need m0 > 0 and eta > -1".into());
                }
                if self.agents < 2 {
                    return fail("practical_consensus_sweep needs N >= 2".into());
                }
            }
            ScenarioKind::InvarianceChecks => {}
        }
        Ok(())
    }
}
