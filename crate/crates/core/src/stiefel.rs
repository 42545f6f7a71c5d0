//! Dense matrix primitives and Stiefel-manifold geometry.
//!
//! `St(p, n) = { S in R^{n x p} : S^T S = I_p }`. The tangent space at `S` is
//! `{ A : sym(S^T A) = 0 }` and the normal space is `{ S V : V symmetric }`,
//! so the orthogonal projection onto the tangent space is
//! `X - S sym(S^T X)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense real matrix. Storage is column-major (nalgebra); all public
/// operations keep entries finite.
pub type Matrix = DMatrix<f64>;

/// Drift `||S^T S - I||_F` above which a state is repaired by retraction.
pub const DEFAULT_DRIFT_TOLERANCE: f64 = 1e-9;
/// Drift above which a run is abandoned.
pub const DEFAULT_DRIFT_FAIL: f64 = 1e-6;
/// Bound on `||sym(S^T V)||_F` for a matrix to count as tangent.
pub const DEFAULT_TANGENCY_TOLERANCE: f64 = 1e-10;
/// Smallest admissible singular value for polar retraction.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Deterministic generator used everywhere a seed is accepted.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn require_square(x: &Matrix, what: &str) -> Result<()> {
    if x.nrows() != x.ncols() {
        return Err(Error::dim(format!(
            "{what} needs a square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

/// `(X + X^T) / 2`.
pub fn sym(x: &Matrix) -> Result<Matrix> {
    require_square(x, "sym")?;
    Ok(sym_unchecked(x))
}

/// `(X - X^T) / 2`.
pub fn skew(x: &Matrix) -> Result<Matrix> {
    require_square(x, "skew")?;
    Ok(skew_unchecked(x))
}

/// `acc += a * x`, entrywise.
pub(crate) fn add_scaled(acc: &mut Matrix, a: f64, x: &Matrix) {
    acc.zip_apply(x, |y, v| *y += a * v);
}

pub(crate) fn sym_unchecked(x: &Matrix) -> Matrix {
    let n = x.nrows();
    Matrix::from_fn(n, n, |i, j| 0.5 * (x[(i, j)] + x[(j, i)]))
}

pub(crate) fn skew_unchecked(x: &Matrix) -> Matrix {
    let n = x.nrows();
    Matrix::from_fn(n, n, |i, j| 0.5 * (x[(i, j)] - x[(j, i)]))
}

/// Outcome of [`validate_stiefel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiefelCheck {
    /// `||S^T S - I_p||_F`
    pub drift: f64,
    /// `| ||S||_F^2 - p |`
    pub norm_defect: f64,
    pub pass: bool,
}

/// `||S^T S - I_p||_F` without shape checks.
pub fn gram_drift(s: &Matrix) -> f64 {
    let p = s.ncols();
    let mut g = s.tr_mul(s);
    for k in 0..p {
        g[(k, k)] -= 1.0;
    }
    g.norm()
}

pub fn validate_stiefel(s: &Matrix, tol: f64) -> Result<StiefelCheck> {
    if s.ncols() > s.nrows() {
        return Err(Error::dim(format!(
            "Stiefel frame needs p <= n, got n = {}, p = {}",
            s.nrows(),
            s.ncols()
        )));
    }
    let drift = gram_drift(s);
    let norm_defect = (s.norm_squared() - s.ncols() as f64).abs();
    Ok(StiefelCheck {
        drift,
        norm_defect,
        pass: drift <= tol && drift.is_finite(),
    })
}

/// A point of `St(p, n)`, i.e. an `n x p` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint(Matrix);

impl StiefelPoint {
    /// Validates `S^T S = I_p` to `tol`.
    pub fn new(s: Matrix, tol: f64) -> Result<Self> {
        let check = validate_stiefel(&s, tol)?;
        if !check.pass {
            return Err(Error::contract(format!(
                "matrix is not on St({}, {}): drift {:e} > {:e}",
                s.ncols(),
                s.nrows(),
                check.drift,
                tol
            )));
        }
        Ok(StiefelPoint(s))
    }

    /// The first `p` columns of `I_n`.
    pub fn canonical(n: usize, p: usize) -> Result<Self> {
        if p == 0 || p > n {
            return Err(Error::dim(format!("need 1 <= p <= n, got n = {n}, p = {p}")));
        }
        Ok(StiefelPoint(Matrix::identity(n, p)))
    }

    /// Wraps a matrix that the caller keeps near the manifold (integrator
    /// stages, post-step states under drift monitoring).
    pub(crate) fn from_raw(s: Matrix) -> Self {
        StiefelPoint(s)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn p(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn drift(&self) -> f64 {
        gram_drift(&self.0)
    }
}

/// A generalized natural frequency, an element of `so(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMatrix(Matrix);

impl FrequencyMatrix {
    /// Antisymmetrizes `x`, so `Xi + Xi^T = 0` holds exactly.
    pub fn new(x: &Matrix) -> Result<Self> {
        Ok(FrequencyMatrix(skew(x)?))
    }

    pub fn zero(p: usize) -> Self {
        FrequencyMatrix(Matrix::zeros(p, p))
    }

    /// Accepts `x` only if it is already exactly skew-symmetric.
    pub fn from_skew(x: Matrix) -> Result<Self> {
        require_square(&x, "frequency matrix")?;
        let p = x.nrows();
        for i in 0..p {
            for j in 0..p {
                if x[(i, j)] != -x[(j, i)] {
                    return Err(Error::contract(format!(
                        "frequency matrix is not skew-symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(FrequencyMatrix(x))
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FrequencyMatrix(&self.0 * factor)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// A tangent vector `V` at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: StiefelPoint,
    pub v: Matrix,
}

impl TangentVector {
    pub fn new(base: StiefelPoint, v: Matrix, tol: f64) -> Result<Self> {
        if v.shape() != base.matrix().shape() {
            return Err(Error::dim(format!(
                "tangent vector shape {:?} differs from base {:?}",
                v.shape(),
                base.matrix().shape()
            )));
        }
        let residual = tangency_residual(base.matrix(), &v);
        if residual > tol {
            return Err(Error::contract(format!(
                "||sym(S^T V)||_F = {residual:e} exceeds {tol:e}"
            )));
        }
        Ok(TangentVector { base, v })
    }
}

/// `||sym(S^T V)||_F`.
pub fn tangency_residual(s: &Matrix, v: &Matrix) -> f64 {
    sym_unchecked(&s.tr_mul(v)).norm()
}

pub(crate) fn project_tangent_raw(x: &Matrix, s: &Matrix) -> Matrix {
    x - s * sym_unchecked(&s.tr_mul(x))
}

/// Orthogonal projection onto the tangent space at `s`.
pub fn project_tangent(x: &Matrix, s: &StiefelPoint) -> Result<TangentVector> {
    if x.shape() != s.matrix().shape() {
        return Err(Error::dim(format!(
            "cannot project {:?} onto tangent space of a {:?} frame",
            x.shape(),
            s.matrix().shape()
        )));
    }
    Ok(TangentVector {
        base: s.clone(),
        v: project_tangent_raw(x, s.matrix()),
    })
}

/// Nearest Stiefel point in Frobenius norm: `X (X^T X)^{-1/2}`, the `U W^T`
/// factor of `X = U diag(sigma) W^T`.
///
/// The inverse square root comes from the symmetric eigendecomposition of
/// `X^T X`, followed by Newton-Schulz sweeps that restore orthonormality
/// without moving the polar factor. nalgebra's SVD returns wrong singular
/// vectors for exactly repeated singular values, which `C (I + r W)` with
/// skew `W` produces whenever `p = n`.
pub fn retract_polar(x: &Matrix) -> Result<StiefelPoint> {
    let p = x.ncols();
    if p > x.nrows() || p == 0 {
        return Err(Error::dim(format!(
            "polar retraction needs 1 <= p <= n, got {}x{}",
            x.nrows(),
            p
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("non-finite entries".into()));
    }
    let smallest = x.singular_values().min();
    if smallest < RANK_TOLERANCE {
        return Err(Error::Degenerate(format!(
            "rank-deficient input, smallest singular value {smallest:e}"
        )));
    }
    let eig = x.tr_mul(x).symmetric_eigen();
    let scale = eig.eigenvalues.map(|l| 1.0 / l.max(smallest * smallest).sqrt());
    let inv_sqrt = &eig.eigenvectors * Matrix::from_diagonal(&scale) * eig.eigenvectors.transpose();
    let mut q = x * inv_sqrt;
    let eye = Matrix::identity(p, p);
    for _ in 0..POLAR_REFINE_SWEEPS {
        let defect = q.tr_mul(&q) - &eye;
        if defect.norm() < 1e-15 {
            break;
        }
        q -= &q * defect * 0.5;
    }
    Ok(StiefelPoint(q))
}

const POLAR_REFINE_SWEEPS: usize = 4;

/// Standard Gaussian `rows x cols` sample.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// QR-orthonormalized Gaussian frame with positive `R` diagonal.
pub fn random_stiefel_with<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<StiefelPoint> {
    if p == 0 || p > n {
        return Err(Error::dim(format!("need 1 <= p <= n, got n = {n}, p = {p}")));
    }
    let g = gaussian_matrix(n, p, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(StiefelPoint(q))
}

pub fn random_stiefel(n: usize, p: usize, seed: u64) -> Result<StiefelPoint> {
    random_stiefel_with(n, p, &mut rng_from_seed(seed))
}

pub fn random_skew_with<R: Rng + ?Sized>(p: usize, scale: f64, rng: &mut R) -> Result<FrequencyMatrix> {
    if p == 0 {
        return Err(Error::dim("frequency matrix needs p >= 1"));
    }
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::param(format!("scale must be finite and >= 0, got {scale}")));
    }
    let g = gaussian_matrix(p, p, rng);
    Ok(FrequencyMatrix(skew_unchecked(&g) * scale))
}

pub fn random_skew(p: usize, scale: f64, seed: u64) -> Result<FrequencyMatrix> {
    random_skew_with(p, scale, &mut rng_from_seed(seed))
}

/// `exp(t Xi)`, an orthogonal `p x p` matrix.
pub fn exp_skew(xi: &FrequencyMatrix, t: f64) -> Matrix {
    if t == 0.0 || xi.is_zero() {
        return Matrix::identity(xi.p(), xi.p());
    }
    (xi.matrix() * t).exp()
}

/// Like [`exp_skew`] for an arbitrary matrix, rejecting non-skew input.
pub fn exp_skew_checked(x: &Matrix, t: f64) -> Result<Matrix> {
    let xi = FrequencyMatrix::from_skew(x.clone())?;
    Ok(exp_skew(&xi, t))
}
