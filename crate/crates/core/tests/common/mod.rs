#![allow(dead_code)]

use accelflow::clf::ClfParams;
use accelflow::objective::{conditioned_matrix, make_quadratic, ProblemInstance};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The 10-D test quadratic: eigenvalues geometric in [1, 100], a fixed
/// minimizer off the origin and `x0 = 1`.
pub fn quadratic10() -> (DMatrix<f64>, ProblemInstance) {
    let mut r = rng(7);
    let q = conditioned_matrix(10, 100.0, &mut r).unwrap();
    let x_star = DVector::from_fn(10, |i, _| i as f64 * 0.1 - 0.3);
    let x0 = DVector::from_element(10, 1.0);
    (q.clone(), make_quadratic(q, x_star, x0).unwrap())
}

pub fn uniform_vector(r: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * r.random_range(-1.0..1.0))
}

/// `10^U(lo, hi)`.
pub fn log_uniform(r: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(r.random_range(lo..hi))
}

/// Random SPD matrix `MᵀM + shift I`.
pub fn random_spd(r: &mut impl Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    let s = m.transpose() * &m + DMatrix::identity(n, n) * shift;
    (&s + s.transpose()) * 0.5
}

/// Random CLF coefficients with `ab - c² > 0` and the requested sign of `c`.
pub fn random_clf(r: &mut impl Rng, c_negative: bool) -> ClfParams {
    let a = log_uniform(r, -1.0, 1.0);
    let b = log_uniform(r, -1.0, 1.0);
    let bound = (a * b).sqrt();
    let mag = bound * r.random_range(0.05..0.95);
    let c = if c_negative { -mag } else { mag };
    ClfParams::new(a, b, c).unwrap()
}

/// `max_i |a_i - b_i|`.
pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

/// V computed from the definition.
pub fn clf_value(p: &ClfParams, lambda: &DVector<f64>, v: &DVector<f64>) -> f64 {
    0.5 * p.a * lambda.dot(lambda) + 0.5 * p.b * v.dot(v) + p.c * lambda.dot(v)
}

/// Lie derivative from the definition, with an explicit Hessian.
pub fn lie(p: &ClfParams, h: &DMatrix<f64>, lambda: &DVector<f64>, v: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let gl = lambda * p.a + v * p.c;
    let gv = lambda * p.c + v * p.b;
    -gl.dot(&(h * v)) + gv.dot(u)
}
