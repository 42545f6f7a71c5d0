//! Interaction weights `a_ik` and the scalar statistics the convergence
//! thresholds are expressed in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stiefel::Matrix;

/// Symmetric, strictly positive `N x N` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    weights: Matrix,
}

impl Topology {
    pub fn new(weights: Matrix) -> Result<Self> {
        let n = weights.nrows();
        if n == 0 || weights.ncols() != n {
            return Err(Error::dim(format!(
                "weight matrix must be square and non-empty, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for i in 0..n {
            for k in 0..n {
                let a = weights[(i, k)];
                if !(a > 0.0) || !a.is_finite() {
                    return Err(Error::param(format!("weight a[{i}][{k}] = {a} is not positive")));
                }
                if a != weights[(k, i)] {
                    return Err(Error::param(format!("weights are not symmetric at ({i}, {k})")));
                }
            }
        }
        Ok(Topology { weights })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::dim("weight rows must all have length N"));
        }
        Topology::new(Matrix::from_fn(n, n, |i, k| rows[i][k]))
    }

    /// Every weight equal to one; the `kappa / N` factor lives in the dynamics.
    pub fn all_to_all(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("all-to-all network needs N >= 1"));
        }
        Ok(Topology {
            weights: Matrix::from_element(n, n, 1.0),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn weight(&self, i: usize, k: usize) -> f64 {
        self.weights[(i, k)]
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Relabels agents: new agent `i` is old agent `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&j| j >= n || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::param("not a permutation of 0..N"));
        }
        Ok(Topology {
            weights: Matrix::from_fn(n, n, |i, k| self.weights[(perm[i], perm[k])]),
        })
    }

    pub fn stats(&self) -> TopologyStats {
        compute_stats(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyStats {
    pub a_min: f64,
    pub a_max: f64,
    /// `max |a_ik - a_jk|` over all `i, j, k`.
    pub d_a: f64,
    /// Row averages `(1/N) sum_k a_ik`.
    pub xi: Vec<f64>,
    pub xi_constant: bool,
    /// `a_min - (N-1)/N (a_max + d_a)`.
    pub lambda: f64,
}

impl TopologyStats {
    /// `0 < Lambda < 8 p a_max^2`.
    pub fn lambda_condition(&self, p: usize) -> bool {
        self.lambda > 0.0 && self.lambda < 8.0 * p as f64 * self.a_max * self.a_max
    }

    /// The common row average when it exists.
    pub fn common_xi(&self) -> Option<f64> {
        self.xi_constant.then(|| self.xi[0])
    }
}

pub fn compute_stats(t: &Topology) -> TopologyStats {
    let n = t.len();
    let w = &t.weights;
    let a_min = w.min();
    let a_max = w.max();
    // For fixed k, max_{i,j} |a_ik - a_jk| is the spread of column k.
    let d_a = (0..n)
        .map(|k| {
            let col = w.column(k);
            col.max() - col.min()
        })
        .fold(0.0, f64::max);
    let xi: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|k| w[(i, k)]).sum::<f64>() / n as f64)
        .collect();
    let scale = xi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let xi_constant = xi.iter().all(|v| (v - xi[0]).abs() <= 1e-12 * scale);
    let lambda = a_min - (n as f64 - 1.0) / n as f64 * (a_max + d_a);
    TopologyStats {
        a_min,
        a_max,
        d_a,
        xi,
        xi_constant,
        lambda,
    }
}
