//! Initial-condition generators.

use crate::diagnostics::diameter_of;
use crate::dynamics::make_tangent_velocity;
use crate::error::{Error, Result};
use crate::stiefel::{
    gaussian_matrix, project_tangent_raw, random_skew_with, random_stiefel_with, retract_polar, FrequencyMatrix, Matrix,
    SimRng, StiefelPoint,
};

/// A random centre with per-agent unit tangent directions; `at_radius`
/// places every agent at `retract(centre + r * direction)`.
#[derive(Debug, Clone)]
pub struct Cluster {
    centre: StiefelPoint,
    directions: Vec<Matrix>,
}

impl Cluster {
    pub fn sample(n: usize, p: usize, n_agents: usize, rng: &mut SimRng) -> Result<Self> {
        let centre = random_stiefel_with(n, p, rng)?;
        let mut directions = Vec::with_capacity(n_agents);
        for _ in 0..n_agents {
            let v = project_tangent_raw(&gaussian_matrix(n, p, rng), centre.matrix());
            let norm = v.norm();
            if norm == 0.0 {
                return Err(Error::Degenerate("zero tangent direction (n = p = 1?)".into()));
            }
            directions.push(v / norm);
        }
        Ok(Cluster { centre, directions })
    }

    pub fn centre(&self) -> &StiefelPoint {
        &self.centre
    }

    pub fn at_radius(&self, r: f64) -> Result<Vec<StiefelPoint>> {
        self.directions
            .iter()
            .map(|v| retract_polar(&(self.centre.matrix() + v * r)))
            .collect()
    }

    fn diameter_at(&self, r: f64) -> Result<f64> {
        let pts: Vec<Matrix> = self.at_radius(r)?.into_iter().map(StiefelPoint::into_matrix).collect();
        Ok(diameter_of(&pts).value)
    }

    /// Bisects the radius so that the diameter equals `target` to 1e-12.
    pub fn with_diameter(&self, target: f64) -> Result<Vec<StiefelPoint>> {
        if !(target > 0.0) {
            return Err(Error::param("target diameter must be positive"));
        }
        if self.directions.len() < 2 {
            return Err(Error::param("a diameter target needs at least two agents"));
        }
        let mut hi = target;
        while self.diameter_at(hi)? < target {
            hi *= 2.0;
            if hi > 1e3 {
                return Err(Error::param(format!("diameter {target} is not reachable from this cluster")));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.diameter_at(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        let pts = self.at_radius(hi)?;
        let got = self.diameter_at(hi)?;
        if (got - target).abs() > 1e-12 {
            return Err(Error::param(format!(
                "diameter {target} not attained (closest {got}); the map radius -> diameter is not monotone here"
            )));
        }
        Ok(pts)
    }
}

pub fn uniform(n: usize, p: usize, n_agents: usize, rng: &mut SimRng) -> Result<Vec<StiefelPoint>> {
    (0..n_agents).map(|_| random_stiefel_with(n, p, rng)).collect()
}

/// Gaussian directions projected onto each tangent space and scaled to
/// Frobenius norm `scale`.
pub fn tangent_velocities(states: &[StiefelPoint], scale: f64, rng: &mut SimRng) -> Result<Vec<Matrix>> {
    states
        .iter()
        .map(|s| {
            let raw = gaussian_matrix(s.n(), s.p(), rng);
            let v = make_tangent_velocity(s, &raw, 1.0)?;
            let norm = v.norm();
            Ok(if norm > 0.0 { v * (scale / norm) } else { v })
        })
        .collect()
}

/// Independent frequencies rescaled so that the largest Frobenius norm is `xi_inf`.
pub fn heterogeneous_frequencies(p: usize, n_agents: usize, xi_inf: f64, rng: &mut SimRng) -> Result<Vec<FrequencyMatrix>> {
    if xi_inf == 0.0 || p == 1 {
        return Ok(vec![FrequencyMatrix::zero(p); n_agents]);
    }
    let raw: Vec<FrequencyMatrix> = (0..n_agents)
        .map(|_| random_skew_with(p, 1.0, rng))
        .collect::<Result<_>>()?;
    let max = raw.iter().map(FrequencyMatrix::norm).fold(0.0, f64::max);
    Ok(raw.into_iter().map(|x| x.scaled(xi_inf / max)).collect())
}

/// One random frequency of norm `xi_inf`, shared by all agents.
pub fn homogeneous_frequencies(p: usize, n_agents: usize, xi_inf: f64, rng: &mut SimRng) -> Result<Vec<FrequencyMatrix>> {
    if xi_inf == 0.0 || p == 1 {
        return Ok(vec![FrequencyMatrix::zero(p); n_agents]);
    }
    let x = random_skew_with(p, 1.0, rng)?;
    let x = x.scaled(xi_inf / x.norm());
    Ok(vec![x; n_agents])
}
