//! Smooth objective oracles and a small catalog of benchmark problems.
//!
//! Every oracle exposes the value, gradient and Hessian of a twice
//! differentiable function `E`. The catalog covers three regimes used by the
//! flows: a strongly convex quadratic with prescribed condition number, the
//! nonconvex two-dimensional Rosenbrock valley, and a smooth convex
//! log-sum-exp of affine forms.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};

/// Default step for central finite differences.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// A twice continuously differentiable objective `E: R^n -> R`.
///
/// Implementations must be pure: the same point always yields the same
/// value, and evaluation may happen concurrently from several threads.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Shared handle to an oracle.
pub type Oracle = Arc<dyn Objective>;

/// `E(x) = ½ (x - x*)ᵀ Q (x - x*)` with `Q` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    q: DMatrix<f64>,
    x_star: DVector<f64>,
}

impl Quadratic {
    pub fn new(q: DMatrix<f64>, x_star: DVector<f64>) -> Result<Self> {
        let n = q.nrows();
        check_dim("quadratic Q columns", n, q.ncols())?;
        check_dim("quadratic minimizer", n, x_star.len())?;
        if n == 0 {
            return Err(Error::invalid("Q", "matrix must be non-empty"));
        }
        let asymmetry = max_asymmetry(&q);
        if asymmetry > 1e-12 {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let min_eig = q.clone().symmetric_eigen().eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "quadratic Q has minimum eigenvalue {min_eig:e}"
            )));
        }
        Ok(Quadratic { q, x_star })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn minimizer(&self) -> &DVector<f64> {
        &self.x_star
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.x_star;
        0.5 * d.dot(&(&self.q * &d))
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * (x - &self.x_star)
    }

    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.q.clone()
    }
}

/// `E(x) = 100 (x₂ - x₁²)² + (1 - x₁)²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rosenbrock;

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let (a, b) = (x[0], x[1]);
        100.0 * (b - a * a).powi(2) + (1.0 - a).powi(2)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (a, b) = (x[0], x[1]);
        let r = b - a * a;
        DVector::from_vec(vec![-2.0 * (1.0 - a) - 400.0 * a * r, 200.0 * r])
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (a, b) = (x[0], x[1]);
        let off = -400.0 * a;
        DMatrix::from_row_slice(2, 2, &[1200.0 * a * a - 400.0 * b + 2.0, off, off, 200.0])
    }
}

/// `E(x) = log Σᵢ exp(aᵢᵀx + bᵢ)`, evaluated with the max-shift trick.
#[derive(Debug, Clone)]
pub struct LogSumExp {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl LogSumExp {
    /// `a` holds one affine form per row.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_dim("log-sum-exp offsets", a.nrows(), b.len())?;
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::invalid("a", "need at least one term and one variable"));
        }
        Ok(LogSumExp { a, b })
    }

    /// Pairs every direction `dᵢ` with `-dᵢ`, so the minimizer is the origin.
    pub fn symmetric(directions: &DMatrix<f64>) -> Result<Self> {
        let (m, n) = directions.shape();
        let mut a = DMatrix::zeros(2 * m, n);
        a.rows_mut(0, m).copy_from(directions);
        a.rows_mut(m, m).copy_from(&(-directions));
        LogSumExp::new(a, DVector::zeros(2 * m))
    }

    fn weights(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let z = &self.a * x + &self.b;
        let shift = z.max();
        let mut p = z.map(|zi| (zi - shift).exp());
        let total = p.sum();
        p /= total;
        (shift + total.ln(), p)
    }
}

impl Objective for LogSumExp {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.weights(x).0
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (_, p) = self.weights(x);
        self.a.tr_mul(&p)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (_, p) = self.weights(x);
        let ap = self.a.tr_mul(&p);
        let mut weighted = self.a.clone();
        for (mut row, pi) in weighted.row_iter_mut().zip(p.iter()) {
            row *= *pi;
        }
        let h = self.a.tr_mul(&weighted) - &ap * ap.transpose();
        symmetrize(h)
    }
}

/// A problem to minimize together with its starting point and, when known,
/// its minimizer.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub oracle: Oracle,
    pub x0: DVector<f64>,
    pub x_star: Option<DVector<f64>>,
    pub e_star: Option<f64>,
}

impl ProblemInstance {
    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }
}

pub fn make_quadratic(
    q: DMatrix<f64>,
    x_star: DVector<f64>,
    x0: DVector<f64>,
) -> Result<ProblemInstance> {
    let quad = Quadratic::new(q, x_star.clone())?;
    check_dim("quadratic x0", quad.dim(), x0.len())?;
    Ok(ProblemInstance {
        name: "quadratic".into(),
        oracle: Arc::new(quad),
        x0,
        x_star: Some(x_star),
        e_star: Some(0.0),
    })
}

pub fn make_rosenbrock(x0: DVector<f64>) -> Result<ProblemInstance> {
    check_dim("rosenbrock x0", 2, x0.len())?;
    Ok(ProblemInstance {
        name: "rosenbrock".into(),
        oracle: Arc::new(Rosenbrock),
        x0,
        x_star: Some(DVector::from_vec(vec![1.0, 1.0])),
        e_star: Some(0.0),
    })
}

/// Symmetric log-sum-exp over `directions` (rows); minimizer at the origin
/// with `E* = ln(2m)`.
pub fn make_log_sum_exp(directions: &DMatrix<f64>, x0: DVector<f64>) -> Result<ProblemInstance> {
    let lse = LogSumExp::symmetric(directions)?;
    check_dim("log-sum-exp x0", lse.dim(), x0.len())?;
    let n = lse.dim();
    let terms = 2 * directions.nrows();
    Ok(ProblemInstance {
        name: "log_sum_exp".into(),
        oracle: Arc::new(lse),
        x0,
        x_star: Some(DVector::zeros(n)),
        e_star: Some((terms as f64).ln()),
    })
}

/// Symmetric positive definite matrix with eigenvalues geometrically spaced
/// in `[1, condition]` and a random orthogonal eigenbasis.
pub fn conditioned_matrix<R: Rng + ?Sized>(
    dim: usize,
    condition: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if dim == 0 {
        return Err(Error::invalid("dim", "must be positive"));
    }
    if !(condition >= 1.0) || !condition.is_finite() {
        return Err(Error::invalid("condition", format!("must be finite and >= 1, got {condition}")));
    }
    let eigs = DVector::from_fn(dim, |i, _| {
        if dim == 1 {
            1.0
        } else {
            condition.powf(i as f64 / (dim - 1) as f64)
        }
    });
    let basis = random_orthogonal(dim, rng);
    let q = &basis * DMatrix::from_diagonal(&eigs) * basis.transpose();
    Ok(symmetrize(q))
}

fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let qr = g.qr();
        if qr.r().diagonal().iter().all(|d: &f64| d.abs() > 1e-8) {
            return qr.q();
        }
    }
}

/// Central-difference gradient `(E(x + h eᵢ) - E(x - h eᵢ)) / 2h`.
pub fn finite_diff_gradient(oracle: &dyn Objective, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        let xi = probe[i];
        probe[i] = xi + h;
        let up = oracle.value(&probe);
        probe[i] = xi - h;
        let down = oracle.value(&probe);
        probe[i] = xi;
        (up - down) / (2.0 * h)
    })
}

/// Central differences of the analytic gradient, one column per coordinate.
pub fn finite_diff_hessian(oracle: &dyn Objective, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut probe = x.clone();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let xj = probe[j];
        probe[j] = xj + h;
        let up = oracle.gradient(&probe);
        probe[j] = xj - h;
        let down = oracle.gradient(&probe);
        probe[j] = xj;
        out.set_column(j, &((up - down) / (2.0 * h)));
    }
    out
}

/// `‖approx - exact‖ / max(‖exact‖, 1)`; the floor keeps the measure
/// meaningful near stationary points.
pub fn relative_error(approx: &[f64], exact: &[f64]) -> f64 {
    let diff: f64 = approx
        .iter()
        .zip(exact)
        .map(|(a, e)| (a - e) * (a - e))
        .sum::<f64>()
        .sqrt();
    let scale = exact.iter().map(|e| e * e).sum::<f64>().sqrt().max(1.0);
    diff / scale
}

/// Largest `|Mᵢⱼ - Mⱼᵢ|` relative to `max(1, max |Mᵢⱼ|)`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}
