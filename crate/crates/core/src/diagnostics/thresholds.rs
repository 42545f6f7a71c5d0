//! Closed-form coupling thresholds and second-order Gronwall envelopes.

use serde::Serialize;

use crate::error::{Error, Result};

const BISECTION_TOL: f64 = 1e-12;
/// `|f(sqrt(2/3))|` at or below this counts as the double root.
const DOUBLE_ROOT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LockThresholds {
    pub kappa_star: f64,
    /// `sqrt(6p)/9 * ||Xi||_inf / a_min`.
    pub kappa_floor: f64,
    pub kappa_condition: bool,
    /// Smaller positive root of `r^3 - 2r + c0`.
    pub alpha: f64,
    /// Larger positive root, below `sqrt(2)`.
    pub beta: f64,
    /// `Lambda / (2 a_max sqrt(p))`.
    pub lambda_bound: f64,
    pub alpha_below_lambda_bound: bool,
    /// `c0 = 2 sqrt(p) ||Xi||_inf / (kappa a_min)`.
    pub cubic_constant: f64,
}

impl LockThresholds {
    /// Rate `2 kappa (Lambda - 2 a_max sqrt(p) alpha)` at which the distance
    /// between two locked solutions contracts.
    pub fn contraction_rate(&self, kappa: f64, lambda: f64, a_max: f64, p: usize) -> f64 {
        2.0 * kappa * (lambda - 2.0 * a_max * (p as f64).sqrt() * self.alpha)
    }
}

fn cubic(r: f64, c0: f64) -> f64 {
    r * r * r - 2.0 * r + c0
}

/// Root of a monotone `f` on `[lo, hi]` with `f(lo)` and `f(hi)` of opposite sign.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo = f(lo);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn lock_thresholds(p: usize, a_min: f64, a_max: f64, lambda: f64, xi_inf: f64, kappa: f64) -> Result<LockThresholds> {
    if p == 0 {
        return Err(Error::param("p must be positive"));
    }
    if !(a_min > 0.0 && a_max >= a_min) {
        return Err(Error::param(format!("need 0 < a_min <= a_max, got ({a_min}, {a_max})")));
    }
    if !(xi_inf >= 0.0) || !(kappa > 0.0) {
        return Err(Error::param("need ||Xi||_inf >= 0 and kappa > 0"));
    }
    let pf = p as f64;
    let upper = 8.0 * pf * a_max * a_max;
    if !(lambda > 0.0 && lambda < upper) {
        return Err(Error::param(format!(
            "Lambda = {lambda} outside (0, 8 p a_max^2 = {upper})"
        )));
    }
    let kappa_star = 16.0 * pf * pf * a_max.powi(3) * xi_inf / (a_min * (upper * lambda - lambda.powi(3)));
    let kappa_floor = (6.0 * pf).sqrt() / 9.0 * xi_inf / a_min;
    let c0 = 2.0 * pf.sqrt() * xi_inf / (kappa * a_min);

    let pivot = (2.0f64 / 3.0).sqrt();
    let at_pivot = cubic(pivot, c0);
    if at_pivot > DOUBLE_ROOT_TOL {
        return Err(Error::NoLockRoots(at_pivot));
    }
    let (alpha, beta) = if at_pivot >= -DOUBLE_ROOT_TOL {
        (pivot, pivot)
    } else if c0 == 0.0 {
        (0.0, 2.0f64.sqrt())
    } else {
        (
            bisect(0.0, pivot, |r| cubic(r, c0)),
            bisect(pivot, 2.0f64.sqrt(), |r| cubic(r, c0)),
        )
    };
    let lambda_bound = lambda / (2.0 * a_max * pf.sqrt());
    Ok(LockThresholds {
        kappa_star,
        kappa_floor,
        kappa_condition: kappa > kappa_star.max(kappa_floor),
        alpha,
        beta,
        lambda_bound,
        alpha_below_lambda_bound: alpha < lambda_bound,
        cubic_constant: c0,
    })
}

/// Envelope for `a y'' + b y' + c y <= eps0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GronwallBound {
    pub bound_at_t: f64,
    pub limsup_bound: f64,
    pub overdamped: bool,
}

/// Overdamped (`b^2 > 4ac`) and underdamped (`b^2 < 4ac`) envelopes. The
/// constant multiplying `1/c` in the overdamped transient is taken as `eps0`.
pub fn gronwall_bound(a: f64, b: f64, c: f64, eps0: f64, y0: f64, yprime0: f64, t: f64) -> Result<GronwallBound> {
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(Error::param("a, b, c must be positive"));
    }
    if !(eps0 >= 0.0) {
        return Err(Error::param("eps0 must be non-negative"));
    }
    if !(t >= 0.0) {
        return Err(Error::param("t must be non-negative"));
    }
    let disc = b * b - 4.0 * a * c;
    if disc == 0.0 {
        return Err(Error::CriticallyDamped);
    }
    if disc > 0.0 {
        let root = disc.sqrt();
        let nu1 = (b + root) / (2.0 * a);
        let nu2 = (b - root) / (2.0 * a);
        let d = eps0;
        let transient = (y0 + d / c) * (-nu1 * t).exp()
            + a / root * (yprime0 + nu1 * y0 - 2.0 * eps0 / (b - root)) * ((-nu2 * t).exp() - (-nu1 * t).exp());
        Ok(GronwallBound {
            bound_at_t: eps0 / c + transient,
            limsup_bound: eps0 / c,
            overdamped: true,
        })
    } else {
        let floor = 4.0 * a * eps0 / (b * b);
        let transient = (y0 - floor + (b / (2.0 * a) * y0 + yprime0 - 2.0 * eps0 / b) * t) * (-b * t / (2.0 * a)).exp();
        Ok(GronwallBound {
            bound_at_t: floor + transient,
            limsup_bound: floor,
            overdamped: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frequency_roots() {
        let l = lock_thresholds(2, 1.0, 1.0, 0.25, 0.0, 1.0).unwrap();
        assert_eq!(l.alpha, 0.0);
        assert_eq!(l.beta, 2.0f64.sqrt());
        assert_eq!(l.kappa_star, 0.0);
        assert!(l.kappa_condition);
    }

    #[test]
    fn double_root() {
        // c0 = (4/3) sqrt(2/3) with p = 1, a_min = 1, kappa = 1 needs ||Xi|| = c0/2
        let c0 = 4.0 / 3.0 * (2.0f64 / 3.0).sqrt();
        let l = lock_thresholds(1, 1.0, 1.0, 0.5, c0 / 2.0, 1.0).unwrap();
        assert!((l.alpha - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(l.alpha, l.beta);
    }

    #[test]
    fn generic_roots_solve_cubic() {
        let l = lock_thresholds(2, 1.0, 1.0, 0.25, 0.1, 5.0).unwrap();
        let pivot = (2.0f64 / 3.0).sqrt();
        assert!(0.0 < l.alpha && l.alpha < pivot && pivot < l.beta && l.beta < 2.0f64.sqrt());
        assert!(cubic(l.alpha, l.cubic_constant).abs() < 1e-10);
        assert!(cubic(l.beta, l.cubic_constant).abs() < 1e-10);
        assert!(l.kappa_condition && l.alpha_below_lambda_bound);
    }

    #[test]
    fn threshold_coupling_puts_alpha_on_the_bound() {
        let (p, lam) = (2, 0.25);
        let k = lock_thresholds(p, 1.0, 1.0, lam, 0.1, 1.0).unwrap().kappa_star;
        let at = lock_thresholds(p, 1.0, 1.0, lam, 0.1, k).unwrap();
        assert!((at.alpha - at.lambda_bound).abs() < 1e-10);
        assert!(!at.kappa_condition);
    }

    #[test]
    fn weak_coupling_has_no_roots() {
        assert!(matches!(lock_thresholds(2, 1.0, 1.0, 0.25, 1.0, 0.1), Err(Error::NoLockRoots(v)) if v > 0.0));
        assert!(matches!(lock_thresholds(2, 1.0, 2.0, -0.5, 0.1, 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn gronwall_examples() {
        for (a, b, c) in [(1.0, 3.0, 2.0), (1.0, 1.0, 1.0)] {
            for t in [0.0, 0.5, 3.0] {
                assert_eq!(gronwall_bound(a, b, c, 0.0, 0.0, 0.0, t).unwrap().bound_at_t, 0.0);
            }
        }
        let g = gronwall_bound(1.0, 3.0, 2.0, 2.0, 0.3, 0.1, 1.0).unwrap();
        assert!(g.overdamped);
        assert_eq!(g.limsup_bound, 1.0);
        let g = gronwall_bound(1.0, 1.0, 1.0, 2.0, 0.3, 0.1, 1.0).unwrap();
        assert!(!g.overdamped);
        assert_eq!(g.limsup_bound, 8.0);
        assert!(matches!(gronwall_bound(1.0, 2.0, 1.0, 1.0, 0.0, 0.0, 1.0), Err(Error::CriticallyDamped)));
    }

    #[test]
    fn gronwall_starts_at_initial_value_when_underdamped() {
        let g = gronwall_bound(1.0, 1.0, 1.0, 0.5, 0.7, -0.2, 0.0).unwrap();
        assert!((g.bound_at_t - 0.7).abs() < 1e-15);
    }
}
