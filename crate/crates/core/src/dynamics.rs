//! Right-hand sides of the consensus flows.
//!
//! First order:
//! `dS_i/dt = S_i Xi_i + (kappa/N) sum_k a_ik [S_k - (S_i S_i^T S_k + S_i S_k^T S_i)/2]`.
//!
//! Second order:
//! `m S_i'' = -m S_i S_i'^T S_i' - gamma S_i' + S_i Xi_i
//!            + (m/gamma)(2 S_i' Xi_i - S_i Xi_i S_i^T S_i' + S_i S_i'^T S_i Xi_i)
//!            + (kappa/N) sum_k a_ik [...]`
//!
//! The coupling sum is evaluated through `C_i = sum_k a_ik S_k`, using
//! `sum_k a_ik (S_i S_i^T S_k + S_i S_k^T S_i)/2 = S_i sym(S_i^T C_i)`. The sum
//! over `k` always runs in ascending order.

use crate::error::{Error, Result};
use crate::network::Topology;
use crate::stiefel::{
    add_scaled, project_tangent_raw, skew_unchecked, sym_unchecked, tangency_residual, FrequencyMatrix, Matrix,
    StiefelPoint, DEFAULT_TANGENCY_TOLERANCE,
};

/// States of `N` agents and, for the second-order model, their velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub states: Vec<StiefelPoint>,
    pub velocities: Option<Vec<Matrix>>,
}

impl Ensemble {
    pub fn first_order(states: Vec<StiefelPoint>) -> Result<Self> {
        check_common_shape(&states)?;
        Ok(Ensemble {
            states,
            velocities: None,
        })
    }

    /// Velocities must satisfy `V^T S + S^T V = 0` to `tol`.
    pub fn second_order(states: Vec<StiefelPoint>, velocities: Vec<Matrix>, tol: f64) -> Result<Self> {
        check_common_shape(&states)?;
        if velocities.len() != states.len() {
            return Err(Error::dim(format!(
                "{} states but {} velocities",
                states.len(),
                velocities.len()
            )));
        }
        for (i, (s, v)) in states.iter().zip(&velocities).enumerate() {
            if v.shape() != s.matrix().shape() {
                return Err(Error::dim(format!("velocity {i} has shape {:?}", v.shape())));
            }
            // ||V^T S + S^T V||_F = 2 ||sym(S^T V)||_F
            let residual = 2.0 * tangency_residual(s.matrix(), v);
            if residual > tol {
                return Err(Error::contract(format!(
                    "velocity {i} violates the tangency constraint: {residual:e} > {tol:e}"
                )));
            }
        }
        Ok(Ensemble {
            states,
            velocities: Some(velocities),
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_second_order(&self) -> bool {
        self.velocities.is_some()
    }

    /// `(n, p)`; panics on an empty ensemble, which constructors reject.
    pub fn shape(&self) -> (usize, usize) {
        (self.states[0].n(), self.states[0].p())
    }

    /// Left-multiplies every state (and velocity) by `l`.
    pub fn left_translate(&self, l: &Matrix) -> Result<Self> {
        let (n, _) = self.shape();
        if l.shape() != (n, n) {
            return Err(Error::dim(format!("left factor must be {n}x{n}")));
        }
        Ok(Ensemble {
            states: self
                .states
                .iter()
                .map(|s| StiefelPoint::from_raw(l * s.matrix()))
                .collect(),
            velocities: self
                .velocities
                .as_ref()
                .map(|vs| vs.iter().map(|v| l * v).collect()),
        })
    }

    /// Right-multiplies every state (and velocity) by `r`.
    pub fn right_multiply(&self, r: &Matrix) -> Result<Self> {
        let (_, p) = self.shape();
        if r.shape() != (p, p) {
            return Err(Error::dim(format!("right factor must be {p}x{p}")));
        }
        Ok(Ensemble {
            states: self
                .states
                .iter()
                .map(|s| StiefelPoint::from_raw(s.matrix() * r))
                .collect(),
            velocities: self
                .velocities
                .as_ref()
                .map(|vs| vs.iter().map(|v| v * r).collect()),
        })
    }

    pub fn state_matrices(&self) -> Vec<Matrix> {
        self.states.iter().map(|s| s.matrix().clone()).collect()
    }

    /// Largest `||S_i^T S_i - I||_F`.
    pub fn max_drift(&self) -> f64 {
        self.states.iter().map(|s| s.drift()).fold(0.0, f64::max)
    }

    /// Largest `||S_i'^T S_i + S_i^T S_i'||_F`, zero for first-order ensembles.
    pub fn max_velocity_constraint(&self) -> f64 {
        match &self.velocities {
            None => 0.0,
            Some(vs) => self
                .states
                .iter()
                .zip(vs)
                .map(|(s, v)| 2.0 * tangency_residual(s.matrix(), v))
                .fold(0.0, f64::max),
        }
    }
}

fn check_common_shape(states: &[StiefelPoint]) -> Result<()> {
    let Some(first) = states.first() else {
        return Err(Error::dim("ensemble needs at least one agent"));
    };
    let shape = first.matrix().shape();
    if let Some(i) = states.iter().position(|s| s.matrix().shape() != shape) {
        return Err(Error::dim(format!(
            "agent {i} has shape {:?}, expected {shape:?}",
            states[i].matrix().shape()
        )));
    }
    Ok(())
}

/// Coupling strength, inertia, friction and per-agent frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kappa: f64,
    pub m: f64,
    pub gamma: f64,
    pub xis: Vec<FrequencyMatrix>,
}

impl ModelParams {
    pub fn first_order(kappa: f64, xis: Vec<FrequencyMatrix>) -> Self {
        ModelParams {
            kappa,
            m: 0.0,
            gamma: 1.0,
            xis,
        }
    }

    pub fn second_order(kappa: f64, m: f64, gamma: f64, xis: Vec<FrequencyMatrix>) -> Self {
        ModelParams { kappa, m, gamma, xis }
    }

    /// All-zero frequencies.
    pub fn homogeneous_zero(n_agents: usize, p: usize) -> Vec<FrequencyMatrix> {
        vec![FrequencyMatrix::zero(p); n_agents]
    }

    /// `max_i ||Xi_i||_F`.
    pub fn xi_inf(&self) -> f64 {
        self.xis.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// True when every frequency matrix is bit-identical to the first.
    pub fn is_homogeneous(&self) -> bool {
        self.xis.windows(2).all(|w| w[0] == w[1])
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::param(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if !(self.m >= 0.0) || !self.m.is_finite() {
            return Err(Error::param(format!("m must be >= 0, got {}", self.m)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::param(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

pub(crate) fn check_inputs(e: &Ensemble, params: &ModelParams, topo: &Topology) -> Result<()> {
    params.validate()?;
    let n_agents = e.len();
    if topo.len() != n_agents {
        return Err(Error::dim(format!(
            "topology has {} agents, ensemble has {n_agents}",
            topo.len()
        )));
    }
    if params.xis.len() != n_agents {
        return Err(Error::dim(format!(
            "{} frequency matrices for {n_agents} agents",
            params.xis.len()
        )));
    }
    let (_, p) = e.shape();
    if let Some(i) = params.xis.iter().position(|x| x.p() != p) {
        return Err(Error::dim(format!("frequency {i} is not {p}x{p}")));
    }
    Ok(())
}

/// `C_i = sum_k a_ik S_k` for every agent.
fn weighted_sums(states: &[Matrix], topo: &Topology) -> Vec<Matrix> {
    let n_agents = states.len();
    let (rows, cols) = states[0].shape();
    (0..n_agents)
        .map(|i| {
            let mut c = Matrix::zeros(rows, cols);
            for (k, s) in states.iter().enumerate() {
                add_scaled(&mut c, topo.weight(i, k), s);
            }
            c
        })
        .collect()
}

/// `(kappa/N) sum_k a_ik [S_k - (S_i S_i^T S_k + S_i S_k^T S_i)/2]` for every `i`.
pub(crate) fn coupling_terms(states: &[Matrix], kappa: f64, topo: &Topology) -> Vec<Matrix> {
    let factor = kappa / states.len() as f64;
    weighted_sums(states, topo)
        .into_iter()
        .zip(states)
        .map(|(c, s)| project_tangent_raw(&c, s) * factor)
        .collect()
}

pub(crate) fn first_order_unchecked(states: &[Matrix], params: &ModelParams, topo: &Topology) -> Vec<Matrix> {
    coupling_terms(states, params.kappa, topo)
        .into_iter()
        .zip(states.iter().zip(&params.xis))
        .map(|(mut c, (s, xi))| {
            if !xi.is_zero() {
                c += s * xi.matrix();
            }
            c
        })
        .collect()
}

/// Velocity field of the first-order model.
pub fn rhs_first_order(e: &Ensemble, params: &ModelParams, topo: &Topology) -> Result<Vec<Matrix>> {
    check_inputs(e, params, topo)?;
    if e.is_second_order() {
        return Err(Error::contract("first-order right-hand side given velocities"));
    }
    Ok(first_order_unchecked(&e.state_matrices(), params, topo))
}

/// Accelerations of the second-order model, without constraint checks.
pub(crate) fn second_order_accelerations(
    states: &[Matrix],
    velocities: &[Matrix],
    params: &ModelParams,
    topo: &Topology,
) -> Vec<Matrix> {
    let m = params.m;
    let gamma = params.gamma;
    let coupling = coupling_terms(states, params.kappa, topo);
    states
        .iter()
        .zip(velocities)
        .zip(coupling.into_iter().zip(&params.xis))
        .map(|((s, v), (c, xi))| {
            // m S'' = -m S V^T V - gamma V + S Xi + (m/gamma)(...) + coupling
            let vtv = v.tr_mul(v);
            let mut acc = -(s * vtv);
            add_scaled(&mut acc, -gamma / m, v);
            add_scaled(&mut acc, 1.0 / m, &c);
            if !xi.is_zero() {
                let x = xi.matrix();
                let s_xi = s * x;
                add_scaled(&mut acc, 1.0 / m, &s_xi);
                let inertial = v * x * 2.0 - &s_xi * s.tr_mul(v) + s * (v.tr_mul(s) * x);
                add_scaled(&mut acc, 1.0 / gamma, &inertial);
            }
            acc
        })
        .collect()
}

/// Returns `(S_i', S_i'')` for every agent.
pub fn rhs_second_order(e: &Ensemble, params: &ModelParams, topo: &Topology) -> Result<Vec<(Matrix, Matrix)>> {
    check_inputs(e, params, topo)?;
    if !(params.m > 0.0) {
        return Err(Error::param("second-order model needs m > 0; use the first-order flow for m = 0"));
    }
    let Some(vel) = &e.velocities else {
        return Err(Error::contract("second-order right-hand side needs velocities"));
    };
    for (i, (s, v)) in e.states.iter().zip(vel).enumerate() {
        let residual = 2.0 * tangency_residual(s.matrix(), v);
        if residual > DEFAULT_TANGENCY_TOLERANCE {
            return Err(Error::contract(format!(
                "velocity {i} violates the tangency constraint: {residual:e}"
            )));
        }
    }
    let acc = second_order_accelerations(&e.state_matrices(), vel, params, topo);
    Ok(vel.iter().cloned().zip(acc).collect())
}

/// `S_i^T S_i' = Xi_i + (kappa/2N) sum_k a_ik (S_i^T S_k - S_k^T S_i)`.
pub fn reduced_velocity(e: &Ensemble, params: &ModelParams, topo: &Topology) -> Result<Vec<Matrix>> {
    check_inputs(e, params, topo)?;
    let factor = params.kappa / (2.0 * e.len() as f64);
    let out = weighted_sums(&e.state_matrices(), topo)
        .into_iter()
        .zip(e.states.iter().zip(&params.xis))
        .map(|(c, (s, xi))| {
            let g = s.matrix().tr_mul(&c);
            let mut r = (&g - g.transpose()) * factor;
            r += xi.matrix();
            r
        })
        .collect();
    Ok(out)
}

fn check_sphere_inputs(x: &[Matrix], omegas: &[Matrix], topo: &Topology) -> Result<usize> {
    let Some(first) = x.first() else {
        return Err(Error::dim("need at least one agent"));
    };
    let n = first.nrows();
    if x.len() != topo.len() || omegas.len() != x.len() {
        return Err(Error::dim("agent counts of states, frequencies and topology differ"));
    }
    if let Some(i) = omegas.iter().position(|o| o.shape() != (n, n)) {
        return Err(Error::dim(format!("Omega_{i} is not {n}x{n}")));
    }
    Ok(n)
}

/// `x_i' = Omega_i x_i + (kappa/N)(I - x_i x_i^T) sum_j a_ij x_j` for unit
/// column vectors `x_i` (stored as `n x 1` matrices).
pub fn rhs_sphere(x: &[Matrix], omegas: &[Matrix], topo: &Topology, kappa: f64) -> Result<Vec<Matrix>> {
    let n = check_sphere_inputs(x, omegas, topo)?;
    for (i, xi) in x.iter().enumerate() {
        if xi.shape() != (n, 1) {
            return Err(Error::dim(format!("x_{i} is not an {n}-vector")));
        }
        if (xi.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("x_{i} is not a unit vector")));
        }
    }
    let factor = kappa / x.len() as f64;
    Ok((0..x.len())
        .map(|i| {
            let mut sum = Matrix::zeros(n, 1);
            for (j, xj) in x.iter().enumerate() {
                add_scaled(&mut sum, topo.weight(i, j), xj);
            }
            let projector = Matrix::identity(n, n) - &x[i] * x[i].transpose();
            &omegas[i] * &x[i] + projector * sum * factor
        })
        .collect())
}

/// `theta_i' = nu_i + (kappa/N) sum_j a_ij sin(theta_j - theta_i)`.
pub fn rhs_kuramoto(theta: &[f64], nu: &[f64], topo: &Topology, kappa: f64) -> Result<Vec<f64>> {
    if theta.len() != nu.len() || theta.len() != topo.len() {
        return Err(Error::dim("angle, frequency and topology sizes differ"));
    }
    let factor = kappa / theta.len() as f64;
    Ok(theta
        .iter()
        .zip(nu)
        .enumerate()
        .map(|(i, (&ti, &nui))| {
            let s: f64 = theta
                .iter()
                .enumerate()
                .map(|(j, &tj)| topo.weight(i, j) * (tj - ti).sin())
                .sum();
            nui + factor * s
        })
        .collect())
}

/// `R_i' = Omega_i R_i + (kappa/N) sum_j a_ij R_i skew(R_i^T R_j)`.
pub fn rhs_so_n(r: &[Matrix], omegas: &[Matrix], topo: &Topology, kappa: f64) -> Result<Vec<Matrix>> {
    let n = check_sphere_inputs(r, omegas, topo)?;
    for (i, ri) in r.iter().enumerate() {
        if ri.shape() != (n, n) {
            return Err(Error::dim(format!("R_{i} is not {n}x{n}")));
        }
        let drift = crate::stiefel::gram_drift(ri);
        if drift > 1e-9 {
            return Err(Error::contract(format!("R_{i} is not orthogonal (drift {drift:e})")));
        }
    }
    let factor = kappa / r.len() as f64;
    Ok((0..r.len())
        .map(|i| {
            let mut acc = Matrix::zeros(n, n);
            for (j, rj) in r.iter().enumerate() {
                add_scaled(&mut acc, topo.weight(i, j), &skew_unchecked(&r[i].tr_mul(rj)));
            }
            &omegas[i] * &r[i] + &r[i] * acc * factor
        })
        .collect())
}

/// Order of the flow a splitting transform undoes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowOrder {
    First,
    Second,
}

impl TryFrom<u8> for FlowOrder {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(FlowOrder::First),
            2 => Ok(FlowOrder::Second),
            other => Err(Error::param(format!("flow order must be 1 or 2, got {other}"))),
        }
    }
}

/// The rotation `exp(t Xi)` (first order) or `exp(t Xi / gamma)` (second
/// order) that a common frequency contributes.
pub fn frequency_rotation(xi: &FrequencyMatrix, t: f64, order: FlowOrder, gamma: f64) -> Matrix {
    match order {
        FlowOrder::First => crate::stiefel::exp_skew(xi, t),
        FlowOrder::Second => crate::stiefel::exp_skew(&xi.scaled(1.0 / gamma), t),
    }
}

/// `S exp(-t Xi)` or `S exp(-t Xi / gamma)`: removes a common frequency.
pub fn split_transform(s: &StiefelPoint, xi: &FrequencyMatrix, t: f64, order: FlowOrder, gamma: f64) -> Result<StiefelPoint> {
    if xi.p() != s.p() {
        return Err(Error::dim(format!("frequency is {}x{}, frame has p = {}", xi.p(), xi.p(), s.p())));
    }
    if order == FlowOrder::Second && !(gamma > 0.0) {
        return Err(Error::param("second-order splitting needs gamma > 0"));
    }
    let r = frequency_rotation(xi, -t, order, gamma);
    Ok(StiefelPoint::from_raw(s.matrix() * r))
}

/// `scale * Pi(raw, S)`, an admissible initial velocity.
pub fn make_tangent_velocity(s: &StiefelPoint, raw: &Matrix, scale: f64) -> Result<Matrix> {
    if raw.shape() != s.matrix().shape() {
        return Err(Error::dim("raw velocity shape differs from the frame"));
    }
    Ok(project_tangent_raw(raw, s.matrix()) * scale)
}

/// `d/dt (S'^T S + S^T S') = S''^T S + 2 S'^T S' + S^T S''` for agent data.
pub fn constraint_rate(s: &Matrix, v: &Matrix, a: &Matrix) -> Matrix {
    let sa = s.tr_mul(a);
    &sa + sa.transpose() + v.tr_mul(v) * 2.0
}

/// `||sym(S_i^T S_i')||_F` for each agent, a tangency diagnostic.
pub fn tangency_of(states: &[StiefelPoint], rates: &[Matrix]) -> Vec<f64> {
    states
        .iter()
        .zip(rates)
        .map(|(s, r)| sym_unchecked(&s.matrix().tr_mul(r)).norm())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stiefel::{gaussian_matrix, random_skew, random_stiefel, rng_from_seed};

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_column_slice(v.len(), 1, v)
    }

    /// Term-by-term evaluation of the coupling sum, kept separate from the
    /// factored path used by the library.
    fn literal_first_order(e: &Ensemble, p: &ModelParams, t: &Topology) -> Vec<Matrix> {
        let n_agents = e.len();
        (0..n_agents)
            .map(|i| {
                let si = e.states[i].matrix();
                let mut out = si * p.xis[i].matrix();
                for k in 0..n_agents {
                    let sk = e.states[k].matrix();
                    let term = sk - (si * si.transpose() * sk + si * sk.transpose() * si) * 0.5;
                    out += term * (p.kappa / n_agents as f64 * t.weight(i, k));
                }
                out
            })
            .collect()
    }

    fn random_ensemble(n_agents: usize, n: usize, p: usize, seed: u64) -> Ensemble {
        Ensemble::first_order((0..n_agents).map(|i| random_stiefel(n, p, seed + i as u64).unwrap()).collect()).unwrap()
    }

    #[test]
    fn consensus_is_stationary() {
        let s = random_stiefel(4, 2, 1).unwrap();
        let e = Ensemble::first_order(vec![s; 5]).unwrap();
        let p = ModelParams::first_order(2.0, ModelParams::homogeneous_zero(5, 2));
        let t = Topology::all_to_all(5).unwrap();
        for r in rhs_first_order(&e, &p, &t).unwrap() {
            assert!(r.norm() < 1e-14);
        }
    }

    #[test]
    fn two_orthogonal_vectors_on_circle() {
        let e = Ensemble::first_order(vec![
            StiefelPoint::new(col(&[1.0, 0.0]), 1e-12).unwrap(),
            StiefelPoint::new(col(&[0.0, 1.0]), 1e-12).unwrap(),
        ])
        .unwrap();
        let p = ModelParams::first_order(1.0, ModelParams::homogeneous_zero(2, 1));
        let t = Topology::all_to_all(2).unwrap();
        let r = rhs_first_order(&e, &p, &t).unwrap();
        assert!((&r[0] - col(&[0.0, 0.5])).norm() < 1e-15);
        assert!((&r[1] - col(&[0.5, 0.0])).norm() < 1e-15);
        // angle lift: theta = (0, pi/2), theta_1' = 1/2 sin(pi/2)
        let k = rhs_kuramoto(&[0.0, std::f64::consts::FRAC_PI_2], &[0.0, 0.0], &t, 1.0).unwrap();
        assert!((k[0] - 0.5).abs() < 1e-15 && (k[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_agent_rotates_with_its_frequency() {
        let s = random_stiefel(5, 3, 2).unwrap();
        let xi = random_skew(3, 1.0, 3).unwrap();
        let e = Ensemble::first_order(vec![s.clone()]).unwrap();
        let p = ModelParams::first_order(4.0, vec![xi.clone()]);
        let r = rhs_first_order(&e, &p, &Topology::all_to_all(1).unwrap()).unwrap();
        assert!((&r[0] - s.matrix() * xi.matrix()).norm() < 1e-14);
    }

    #[test]
    fn factored_coupling_matches_literal_sum() {
        let e = random_ensemble(6, 5, 2, 10);
        let xis = (0..6).map(|i| random_skew(2, 0.3, 50 + i).unwrap()).collect();
        let p = ModelParams::first_order(1.7, xis);
        let t = Topology::from_rows(&[
            vec![1.0, 2.0, 0.5, 1.0, 1.0, 3.0],
            vec![2.0, 1.0, 1.0, 1.5, 1.0, 1.0],
            vec![0.5, 1.0, 2.0, 1.0, 0.7, 1.0],
            vec![1.0, 1.5, 1.0, 1.0, 1.0, 0.2],
            vec![1.0, 1.0, 0.7, 1.0, 4.0, 1.0],
            vec![3.0, 1.0, 1.0, 0.2, 1.0, 1.0],
        ])
        .unwrap();
        let fast = rhs_first_order(&e, &p, &t).unwrap();
        let slow = literal_first_order(&e, &p, &t);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-13);
        }
        for r in tangency_of(&e.states, &fast) {
            assert!(r < 1e-12);
        }
    }

    #[test]
    fn reduced_velocity_matches_contraction() {
        let e = random_ensemble(5, 4, 3, 30);
        let xis = (0..5).map(|i| random_skew(3, 0.5, 70 + i).unwrap()).collect();
        let p = ModelParams::first_order(2.0, xis);
        let t = Topology::all_to_all(5).unwrap();
        let rhs = rhs_first_order(&e, &p, &t).unwrap();
        let red = reduced_velocity(&e, &p, &t).unwrap();
        for ((s, r), g) in e.states.iter().zip(&rhs).zip(&red) {
            assert!((s.matrix().tr_mul(r) - g).norm() < 1e-12);
            assert!((g + g.transpose()).norm() == 0.0);
        }
    }

    #[test]
    fn dimension_mismatches_are_reported() {
        let e = random_ensemble(3, 4, 2, 0);
        let p = ModelParams::first_order(1.0, ModelParams::homogeneous_zero(3, 2));
        assert!(matches!(rhs_first_order(&e, &p, &Topology::all_to_all(4).unwrap()), Err(Error::Dimension(_))));
        let p_bad = ModelParams::first_order(1.0, ModelParams::homogeneous_zero(3, 3));
        assert!(matches!(rhs_first_order(&e, &p_bad, &Topology::all_to_all(3).unwrap()), Err(Error::Dimension(_))));
        let mixed = vec![random_stiefel(4, 2, 1).unwrap(), random_stiefel(5, 2, 1).unwrap()];
        assert!(Ensemble::first_order(mixed).is_err());
    }

    #[test]
    fn second_order_degenerate_cases() {
        let s = random_stiefel(4, 2, 5).unwrap();
        let t = Topology::all_to_all(3).unwrap();
        let e = Ensemble::second_order(vec![s; 3], vec![Matrix::zeros(4, 2); 3], 1e-12).unwrap();
        let p = ModelParams::second_order(1.0, 1.0, 2.0, ModelParams::homogeneous_zero(3, 2));
        for (v, a) in rhs_second_order(&e, &p, &t).unwrap() {
            assert_eq!(v.norm(), 0.0);
            assert!(a.norm() < 1e-14);
        }

        // at rest, m S'' equals the first-order coupling
        let states: Vec<_> = (0..3).map(|i| random_stiefel(4, 2, 90 + i).unwrap()).collect();
        let e2 = Ensemble::second_order(states.clone(), vec![Matrix::zeros(4, 2); 3], 1e-12).unwrap();
        let p2 = ModelParams::second_order(1.5, 0.25, 2.0, ModelParams::homogeneous_zero(3, 2));
        let first = rhs_first_order(&Ensemble::first_order(states).unwrap(), &ModelParams::first_order(1.5, p2.xis.clone()), &t).unwrap();
        for ((_, a), f) in rhs_second_order(&e2, &p2, &t).unwrap().iter().zip(&first) {
            assert!((a * 0.25 - f).norm() < 1e-14);
        }

        let p0 = ModelParams::second_order(1.0, 0.0, 2.0, ModelParams::homogeneous_zero(3, 2));
        assert!(matches!(rhs_second_order(&e2, &p0, &t), Err(Error::Parameter(_))));
    }

    #[test]
    fn second_order_rejects_non_tangent_velocity() {
        let s = random_stiefel(4, 2, 5).unwrap();
        assert!(Ensemble::second_order(vec![s.clone()], vec![s.matrix().clone()], 1e-10).is_err());
        let e = Ensemble {
            states: vec![s.clone()],
            velocities: Some(vec![s.matrix() * 0.1]),
        };
        let p = ModelParams::second_order(1.0, 1.0, 1.0, vec![FrequencyMatrix::zero(2)]);
        assert!(matches!(rhs_second_order(&e, &p, &Topology::all_to_all(1).unwrap()), Err(Error::Contract(_))));
    }

    #[test]
    fn second_order_preserves_constraint_to_first_order() {
        let n_agents = 4;
        let mut rng = rng_from_seed(123);
        let states: Vec<_> = (0..n_agents).map(|i| random_stiefel(5, 3, 200 + i as u64).unwrap()).collect();
        let vels: Vec<_> = states
            .iter()
            .map(|s| make_tangent_velocity(s, &gaussian_matrix(5, 3, &mut rng), 0.7).unwrap())
            .collect();
        let xis = (0..n_agents).map(|i| random_skew(3, 0.8, 300 + i as u64).unwrap()).collect();
        let e = Ensemble::second_order(states, vels, 1e-12).unwrap();
        let p = ModelParams::second_order(1.3, 0.6, 1.1, xis);
        let out = rhs_second_order(&e, &p, &Topology::all_to_all(n_agents).unwrap()).unwrap();
        for (s, (v, a)) in e.states.iter().zip(&out) {
            assert!(constraint_rate(s.matrix(), v, a).norm() <= 1e-10);
        }
    }

    #[test]
    fn sphere_and_stiefel_agree_at_p_one() {
        let e = random_ensemble(5, 3, 1, 40);
        let t = Topology::all_to_all(5).unwrap();
        let p = ModelParams::first_order(1.3, ModelParams::homogeneous_zero(5, 1));
        let stiefel = rhs_first_order(&e, &p, &t).unwrap();
        let x: Vec<_> = e.states.iter().map(|s| s.matrix().clone()).collect();
        let sphere = rhs_sphere(&x, &vec![Matrix::zeros(3, 3); 5], &t, 1.3).unwrap();
        for (a, b) in stiefel.iter().zip(&sphere) {
            assert!((a - b).norm() <= 1e-14);
        }
        for (xi, r) in x.iter().zip(&sphere) {
            assert!(xi.dot(r).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_rejects_non_unit() {
        let t = Topology::all_to_all(1).unwrap();
        assert!(rhs_sphere(&[col(&[2.0, 0.0])], &[Matrix::zeros(2, 2)], &t, 1.0).is_err());
    }

    #[test]
    fn so_n_planar_pair_reduces_to_kuramoto() {
        let phi: f64 = 0.9;
        let (s, c) = phi.sin_cos();
        let r1 = Matrix::identity(2, 2);
        let r2 = Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let t = Topology::all_to_all(2).unwrap();
        let out = rhs_so_n(&[r1.clone(), r2.clone()], &[Matrix::zeros(2, 2), Matrix::zeros(2, 2)], &t, 1.0).unwrap();
        // R_1' = theta_1' J with J = [[0,-1],[1,0]]
        let rate = 0.5 * phi.sin();
        assert!((out[0][(1, 0)] - rate).abs() < 1e-15);
        assert!((out[0][(0, 1)] + rate).abs() < 1e-15);
        for (r, d) in [r1, r2].iter().zip(&out) {
            let g = r.tr_mul(d);
            assert!((&g + g.transpose()).norm() < 1e-15);
        }
    }

    #[test]
    fn so_n_matches_stiefel_for_square_frames() {
        let e = random_ensemble(4, 3, 3, 60);
        let t = Topology::all_to_all(4).unwrap();
        let p = ModelParams::first_order(0.8, ModelParams::homogeneous_zero(4, 3));
        let stiefel = rhs_first_order(&e, &p, &t).unwrap();
        let r: Vec<_> = e.states.iter().map(|s| s.matrix().clone()).collect();
        let so = rhs_so_n(&r, &vec![Matrix::zeros(3, 3); 4], &t, 0.8).unwrap();
        for (a, b) in stiefel.iter().zip(&so) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn split_transform_examples() {
        let s = random_stiefel(4, 2, 8).unwrap();
        let xi = random_skew(2, 1.0, 9).unwrap();
        let id = split_transform(&s, &xi, 0.0, FlowOrder::First, 1.0).unwrap();
        assert_eq!(id.matrix(), s.matrix());
        let z = split_transform(&s, &FrequencyMatrix::zero(2), 3.0, FlowOrder::Second, 2.0).unwrap();
        assert_eq!(z.matrix(), s.matrix());
        for order in [FlowOrder::First, FlowOrder::Second] {
            let a = split_transform(&split_transform(&s, &xi, 0.7, order, 2.0).unwrap(), &xi, 0.4, order, 2.0).unwrap();
            let b = split_transform(&s, &xi, 1.1, order, 2.0).unwrap();
            assert!((a.matrix() - b.matrix()).norm() < 1e-12);
            assert!(b.drift() < 1e-12);
        }
        assert!(FlowOrder::try_from(3).is_err());
    }

    #[test]
    fn tangent_velocity_examples() {
        let s = random_stiefel(6, 2, 17).unwrap();
        assert!(make_tangent_velocity(&s, s.matrix(), 1.0).unwrap().norm() < 1e-14);
        let mut rng = rng_from_seed(18);
        let raw = gaussian_matrix(6, 2, &mut rng);
        assert_eq!(make_tangent_velocity(&s, &raw, 0.0).unwrap().norm(), 0.0);
        let v = make_tangent_velocity(&s, &raw, 1.5).unwrap();
        let residual = (v.tr_mul(s.matrix()) + s.matrix().tr_mul(&v)).norm();
        assert!(residual <= 1e-12);
    }
}
