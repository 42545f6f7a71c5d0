use crate::dynamics::{Ensemble, ModelParams};
use crate::error::{Error, Result};
use crate::network::Topology;
use crate::stiefel::Matrix;

/// Largest pairwise distance and the lexicographically first pair attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diameter {
    pub value: f64,
    pub pair: (usize, usize),
}

pub fn diameter_of(mats: &[Matrix]) -> Diameter {
    let mut best = Diameter {
        value: 0.0,
        pair: (0, 0),
    };
    for i in 0..mats.len() {
        for j in i + 1..mats.len() {
            let d = (&mats[i] - &mats[j]).norm();
            if d > best.value {
                best = Diameter { value: d, pair: (i, j) };
            }
        }
    }
    best
}

/// `max_{i,j} ||S_i - S_j||_F`.
pub fn diameter(e: &Ensemble) -> Diameter {
    diameter_of(&e.state_matrices())
}

/// `max_i ||S_i'||_F`; `None` for first-order ensembles.
pub fn velocity_diameter(e: &Ensemble) -> Option<f64> {
    e.velocities
        .as_ref()
        .map(|vs| vs.iter().map(|v| v.norm()).fold(0.0, f64::max))
}

/// `H_ij = I - S_i^T S_j` together with `tr(H_ij + H_ji)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramDefect {
    pub i: usize,
    pub j: usize,
    pub h: Matrix,
    pub symmetric_trace: f64,
}

/// All ordered pairs `(i, j)` in row-major order.
pub fn gram_defect(e: &Ensemble) -> Vec<GramDefect> {
    let (_, p) = e.shape();
    let id = Matrix::identity(p, p);
    let mut out = Vec::with_capacity(e.len() * e.len());
    for (i, si) in e.states.iter().enumerate() {
        for (j, sj) in e.states.iter().enumerate() {
            let h = &id - si.matrix().tr_mul(sj.matrix());
            let symmetric_trace = 2.0 * h.trace();
            out.push(GramDefect {
                i,
                j,
                h,
                symmetric_trace,
            });
        }
    }
    out
}

/// `(1/N^2) sum_{i,j} ||S_i - S_j||_F^2`.
pub fn g_functional_of(mats: &[Matrix]) -> f64 {
    let n = mats.len() as f64;
    let mut sum = 0.0;
    for a in mats {
        for b in mats {
            sum += (a - b).norm_squared();
        }
    }
    sum / (n * n)
}

pub fn g_functional(e: &Ensemble) -> f64 {
    g_functional_of(&e.state_matrices())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    pub kinetic: f64,
    pub interaction: f64,
    pub total: f64,
}

/// `K = (m/N) sum ||S_i'||^2`, `L = (kappa/2N^2) sum a_ij ||S_i - S_j||^2`.
pub fn energy(e: &Ensemble, params: &ModelParams, topo: &Topology) -> Result<Energies> {
    let Some(vel) = &e.velocities else {
        return Err(Error::contract("energy needs velocities"));
    };
    if topo.len() != e.len() {
        return Err(Error::dim("topology and ensemble sizes differ"));
    }
    Ok(energies_unchecked(e, vel, params, topo))
}

pub(crate) fn energies_unchecked(e: &Ensemble, vel: &[Matrix], params: &ModelParams, topo: &Topology) -> Energies {
    let n = e.len() as f64;
    let kinetic = params.m / n * vel.iter().map(|v| v.norm_squared()).sum::<f64>();
    let mut pair_sum = 0.0;
    for (i, si) in e.states.iter().enumerate() {
        for (j, sj) in e.states.iter().enumerate() {
            pair_sum += topo.weight(i, j) * (si.matrix() - sj.matrix()).norm_squared();
        }
    }
    let interaction = params.kappa / (2.0 * n * n) * pair_sum;
    Energies {
        kinetic,
        interaction,
        total: kinetic + interaction,
    }
}

/// `-(2 gamma/N) sum ||S_i'||^2 + (1/N) sum tr(S_i'^T S_i Xi_i - Xi_i S_i^T S_i')`.
pub fn energy_dissipation_rhs(e: &Ensemble, params: &ModelParams) -> Result<f64> {
    let Some(vel) = &e.velocities else {
        return Err(Error::contract("energy dissipation needs velocities"));
    };
    if params.xis.len() != e.len() {
        return Err(Error::dim("frequency count differs from agent count"));
    }
    let n = e.len() as f64;
    let mut friction = 0.0;
    let mut rotation = 0.0;
    for ((s, v), xi) in e.states.iter().zip(vel).zip(&params.xis) {
        friction += v.norm_squared();
        let x = xi.matrix();
        rotation += (v.tr_mul(s.matrix()) * x).trace() - (x * s.matrix().tr_mul(v)).trace();
    }
    Ok(-2.0 * params.gamma / n * friction + rotation / n)
}

/// `max_{i,j} ||S_i^T S_j - T_i^T T_j||_F` over ordered pairs.
pub fn inter_diameter(a: &Ensemble, b: &Ensemble) -> Result<f64> {
    if a.len() != b.len() || a.shape() != b.shape() {
        return Err(Error::dim("ensembles differ in agent count or frame shape"));
    }
    let mut best: f64 = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            let ga = a.states[i].matrix().tr_mul(a.states[j].matrix());
            let gb = b.states[i].matrix().tr_mul(b.states[j].matrix());
            best = best.max((ga - gb).norm());
        }
    }
    Ok(best)
}

/// `S_i^T S_j` for all ordered pairs, row-major.
pub fn relative_states(e: &Ensemble) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(e.len() * e.len());
    for si in &e.states {
        for sj in &e.states {
            out.push(si.matrix().tr_mul(sj.matrix()));
        }
    }
    out
}
