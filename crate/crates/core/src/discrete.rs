//! Discrete counterparts of the accelerated flows.
//!
//! The single-step maps are pure functions of the current iterates. The
//! `*_iterate` drivers run them from an explicit initialization and record
//! the per-step coefficients in an [`IterateSequence`].
//!
//! Correspondences exercised by the tests:
//!
//! * conjugate gradients `x_{k+1} = x_k + α_k v_k`, `v_k = -g_k + β^CG_k v_{k-1}`
//!   is the heavy-ball iteration with `β_k = α_k β^CG_k / α_{k-1}`;
//! * the two-step Nesterov scheme, written in its `y` sequence, is the
//!   one-step scheme with gradient correction `γ = αβ`;
//! * the one-step scheme with `(α, β, γ) = (γ_a h², 1 - γ_b h, γ_c h)` is a
//!   finite-difference discretization of `ẍ + γ_a ∇E + γ_b ẋ + γ_c ∇²E ẋ = 0`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::control::{DirectGains, FeedbackGains};
use crate::error::{check_dim, Error, Result};
use crate::flow::DIVERGENCE_BOUND;
use crate::metric::{metric_matrix, metric_solve, quasi_newton_update, MetricKind, MetricSpec};
use crate::objective::Objective;

/// A per-iteration coefficient: one value for every step, or an explicit
/// list indexed by `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(f64),
    Values(Vec<f64>),
}

impl Schedule {
    pub fn at(&self, k: usize, name: &'static str) -> Result<f64> {
        match self {
            Schedule::Constant(c) => Ok(*c),
            Schedule::Values(v) => v.get(k).copied().ok_or_else(|| {
                Error::invalid(name, format!("schedule has {} entries, step {k} requested", v.len()))
            }),
        }
    }

    fn check_nonnegative(&self, name: &'static str) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        let valid = match self {
            Schedule::Constant(c) => ok(*c),
            Schedule::Values(v) => v.iter().all(|&x| ok(x)),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::invalid(name, "entries must be finite and >= 0"))
        }
    }
}

/// Step length rule for [`cg_iterate`].
#[derive(Debug, Clone, PartialEq)]
pub enum StepRule {
    Given(Schedule),
    /// `α_k = -g_kᵀv_k / v_kᵀ∇²E(x_k)v_k`, exact on quadratics.
    ExactLineSearch,
}

/// Rule for the conjugacy coefficient `β^CG_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaCgRule {
    /// `‖g_k‖² / ‖g_{k-1}‖²`.
    FletcherReeves,
    Given(Schedule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterStop {
    Converged,
    IterationLimit,
    Diverged,
}

/// Budget for the drivers. `tol_g = 0` runs exactly `max_iters` steps unless
/// the gradient vanishes exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLimit {
    pub max_iters: usize,
    pub tol_g: f64,
}

impl IterationLimit {
    pub fn fixed(max_iters: usize) -> Self {
        IterationLimit { max_iters, tol_g: 0.0 }
    }
}

/// Coefficients used on the transition `k -> k+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub alpha: f64,
    /// Momentum coefficient of the heavy-ball form.
    pub beta: f64,
    pub gamma: f64,
    pub beta_cg: Option<f64>,
    /// CG search direction or velocity `v_k`.
    pub direction: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSequence {
    /// `x_0, x_1, ...` (the `y` sequence for the two-step Nesterov form).
    pub points: Vec<DVector<f64>>,
    /// Gradient at each point.
    pub gradients: Vec<DVector<f64>>,
    /// `steps[k]` produced `points[k + 1]`.
    pub steps: Vec<StepRecord>,
    /// Second sequence where the method has one: the `x_k` of the two-step
    /// Nesterov form, or the velocities of the accelerated Newton steps.
    pub companion: Vec<DVector<f64>>,
    pub stop: IterStop,
}

impl IterateSequence {
    fn start(x0: DVector<f64>, g0: DVector<f64>) -> Self {
        IterateSequence {
            points: vec![x0],
            gradients: vec![g0],
            steps: Vec::new(),
            companion: Vec::new(),
            stop: IterStop::IterationLimit,
        }
    }

    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn last(&self) -> &DVector<f64> {
        self.points.last().expect("sequence holds x_0")
    }

    pub fn gradient_norms(&self) -> Vec<f64> {
        self.gradients.iter().map(|g| g.norm()).collect()
    }

    /// First index whose gradient norm is at most `tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.gradients.iter().position(|g| g.norm() <= tol)
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Push a new point and decide whether to continue.
    fn advance(&mut self, x: DVector<f64>, g: DVector<f64>, rec: StepRecord, limit: &IterationLimit) -> bool {
        let finite = x.iter().chain(g.iter()).all(|e| e.is_finite());
        let gn = g.norm();
        let diverged = !finite || x.norm() > DIVERGENCE_BOUND;
        self.points.push(x);
        self.gradients.push(g);
        self.steps.push(rec);
        if diverged {
            self.stop = IterStop::Diverged;
            return false;
        }
        if gn <= limit.tol_g {
            self.stop = IterStop::Converged;
            return false;
        }
        true
    }
}

fn initial_converged(seq: &mut IterateSequence, limit: &IterationLimit) -> bool {
    if seq.gradients[0].norm() <= limit.tol_g {
        seq.stop = IterStop::Converged;
        return true;
    }
    false
}

/// `x_{k+1} = x_k - α_k g_k + β_k (x_k - x_{k-1})`.
pub fn heavy_ball_step(
    oracle: &dyn Objective,
    x_k: &DVector<f64>,
    x_km1: &DVector<f64>,
    alpha_k: f64,
    beta_k: f64,
) -> Result<DVector<f64>> {
    check_dim("x_k", oracle.dim(), x_k.len())?;
    check_dim("x_{k-1}", oracle.dim(), x_km1.len())?;
    let g = oracle.gradient(x_k);
    Ok(heavy_ball_update(x_k, x_km1, &g, alpha_k, beta_k))
}

fn heavy_ball_update(
    x_k: &DVector<f64>,
    x_km1: &DVector<f64>,
    g_k: &DVector<f64>,
    alpha_k: f64,
    beta_k: f64,
) -> DVector<f64> {
    x_k - g_k * alpha_k + (x_k - x_km1) * beta_k
}

/// Momentum coefficient equivalent to a CG step: `α_k β^CG_k / α_{k-1}`.
pub fn cg_to_momentum(alpha_k: f64, alpha_km1: f64, beta_cg_k: f64) -> Result<f64> {
    if alpha_km1 == 0.0 || !alpha_km1.is_finite() {
        return Err(Error::invalid("alpha_{k-1}", format!("must be non-zero, got {alpha_km1}")));
    }
    Ok(alpha_k * beta_cg_k / alpha_km1)
}

/// Nonlinear CG in its two-sequence form, starting from `v_0 = -g_0`.
///
/// The recorded `beta` is the heavy-ball equivalent from [`cg_to_momentum`]
/// (zero on the first step or after a zero step).
pub fn cg_iterate(
    oracle: &dyn Objective,
    x0: &DVector<f64>,
    limit: IterationLimit,
    alpha_rule: &StepRule,
    beta_rule: &BetaCgRule,
) -> Result<IterateSequence> {
    check_dim("x_0", oracle.dim(), x0.len())?;
    if let StepRule::Given(s) = alpha_rule {
        s.check_nonnegative("alpha")?;
    }
    if let BetaCgRule::Given(s) = beta_rule {
        s.check_nonnegative("beta_cg")?;
    }
    let mut seq = IterateSequence::start(x0.clone(), oracle.gradient(x0));
    if initial_converged(&mut seq, &limit) {
        return Ok(seq);
    }
    let mut v_prev: Option<DVector<f64>> = None;
    let mut alpha_prev = 0.0;
    for k in 0..limit.max_iters {
        let x = &seq.points[k];
        let g = &seq.gradients[k];
        let beta_cg = match (&v_prev, beta_rule) {
            (None, _) => 0.0,
            (Some(_), BetaCgRule::FletcherReeves) => {
                let prev = seq.gradients[k - 1].norm_squared();
                if prev == 0.0 {
                    0.0
                } else {
                    g.norm_squared() / prev
                }
            }
            (Some(_), BetaCgRule::Given(s)) => s.at(k, "beta_cg")?,
        };
        let v = match &v_prev {
            Some(vp) => -g + vp * beta_cg,
            None => -g,
        };
        let alpha = match alpha_rule {
            StepRule::Given(s) => s.at(k, "alpha")?,
            StepRule::ExactLineSearch => {
                let curvature = v.dot(&(oracle.hessian(x) * &v));
                if v.norm_squared() == 0.0 {
                    0.0
                } else if !(curvature > 0.0) {
                    return Err(Error::NotPositiveDefinite(format!(
                        "exact line search needs vᵀ∇²E v > 0, got {curvature}"
                    )));
                } else {
                    -g.dot(&v) / curvature
                }
            }
        };
        let beta = if k == 0 || alpha_prev == 0.0 {
            0.0
        } else {
            cg_to_momentum(alpha, alpha_prev, beta_cg)?
        };
        let x_next = x + &v * alpha;
        let g_next = oracle.gradient(&x_next);
        let rec = StepRecord {
            alpha,
            beta,
            gamma: 0.0,
            beta_cg: Some(beta_cg),
            direction: Some(v.clone()),
        };
        alpha_prev = alpha;
        v_prev = Some(v);
        if !seq.advance(x_next, g_next, rec, &limit) {
            break;
        }
    }
    Ok(seq)
}

/// Heavy-ball iteration from `(x_0, x_{-1})`.
pub fn heavy_ball_iterate(
    oracle: &dyn Objective,
    x0: &DVector<f64>,
    x_m1: &DVector<f64>,
    alpha: &Schedule,
    beta: &Schedule,
    limit: IterationLimit,
) -> Result<IterateSequence> {
    nesterov_one_step_iterate_from(oracle, x0, x_m1, None, alpha, beta, &Schedule::Constant(0.0), limit)
}

/// `x_k = y_k - α_k ∇E(y_k)`, `y_{k+1} = x_k + β_k (x_k - x_{k-1})`.
pub fn nesterov_two_step(
    oracle: &dyn Objective,
    y_k: &DVector<f64>,
    x_km1: &DVector<f64>,
    alpha_k: f64,
    beta_k: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("y_k", oracle.dim(), y_k.len())?;
    check_dim("x_{k-1}", oracle.dim(), x_km1.len())?;
    let g = oracle.gradient(y_k);
    Ok(two_step_update(y_k, x_km1, &g, alpha_k, beta_k))
}

fn two_step_update(
    y_k: &DVector<f64>,
    x_km1: &DVector<f64>,
    g_y: &DVector<f64>,
    alpha_k: f64,
    beta_k: f64,
) -> (DVector<f64>, DVector<f64>) {
    let x_k = y_k - g_y * alpha_k;
    let y_next = &x_k + (&x_k - x_km1) * beta_k;
    (x_k, y_next)
}

/// `x_{k+1} = x_k - α_k g_k + β_k (x_k - x_{k-1}) - γ_k (g_k - g_{k-1})`.
pub fn nesterov_one_step(
    oracle: &dyn Objective,
    x_k: &DVector<f64>,
    x_km1: &DVector<f64>,
    g_km1: &DVector<f64>,
    alpha_k: f64,
    beta_k: f64,
    gamma_k: f64,
) -> Result<DVector<f64>> {
    check_dim("x_k", oracle.dim(), x_k.len())?;
    check_dim("x_{k-1}", oracle.dim(), x_km1.len())?;
    check_dim("g_{k-1}", oracle.dim(), g_km1.len())?;
    let g = oracle.gradient(x_k);
    Ok(one_step_update(x_k, x_km1, &g, g_km1, alpha_k, beta_k, gamma_k))
}

fn one_step_update(
    x_k: &DVector<f64>,
    x_km1: &DVector<f64>,
    g_k: &DVector<f64>,
    g_km1: &DVector<f64>,
    alpha_k: f64,
    beta_k: f64,
    gamma_k: f64,
) -> DVector<f64> {
    heavy_ball_update(x_k, x_km1, g_k, alpha_k, beta_k) - (g_k - g_km1) * gamma_k
}

/// One-step Nesterov iteration started at rest: `x_{-1} = x_0`,
/// `g_{-1} = ∇E(x_0)`.
pub fn nesterov_one_step_iterate(
    oracle: &dyn Objective,
    x0: &DVector<f64>,
    alpha: &Schedule,
    beta: &Schedule,
    gamma: &Schedule,
    limit: IterationLimit,
) -> Result<IterateSequence> {
    nesterov_one_step_iterate_from(oracle, x0, x0, None, alpha, beta, gamma, limit)
}

/// One-step iteration from explicit `(x_0, x_{-1}, g_{-1})`; `g_{-1}`
/// defaults to `∇E(x_{-1})`.
#[allow(clippy::too_many_arguments)]
pub fn nesterov_one_step_iterate_from(
    oracle: &dyn Objective,
    x0: &DVector<f64>,
    x_m1: &DVector<f64>,
    g_m1: Option<&DVector<f64>>,
    alpha: &Schedule,
    beta: &Schedule,
    gamma: &Schedule,
    limit: IterationLimit,
) -> Result<IterateSequence> {
    let n = oracle.dim();
    check_dim("x_0", n, x0.len())?;
    check_dim("x_{-1}", n, x_m1.len())?;
    alpha.check_nonnegative("alpha")?;
    beta.check_nonnegative("beta")?;
    let mut g_prev = match g_m1 {
        Some(g) => {
            check_dim("g_{-1}", n, g.len())?;
            g.clone()
        }
        None => oracle.gradient(x_m1),
    };
    let mut x_prev = x_m1.clone();
    let mut seq = IterateSequence::start(x0.clone(), oracle.gradient(x0));
    if initial_converged(&mut seq, &limit) {
        return Ok(seq);
    }
    for k in 0..limit.max_iters {
        let (a, b, c) = (alpha.at(k, "alpha")?, beta.at(k, "beta")?, gamma.at(k, "gamma")?);
        let x = &seq.points[k];
        let g = &seq.gradients[k];
        let x_next = one_step_update(x, &x_prev, g, &g_prev, a, b, c);
        let g_next = oracle.gradient(&x_next);
        x_prev = x.clone();
        g_prev = g.clone();
        let rec = StepRecord {
            alpha: a,
            beta: b,
            gamma: c,
            beta_cg: None,
            direction: None,
        };
        if !seq.advance(x_next, g_next, rec, &limit) {
            break;
        }
    }
    Ok(seq)
}

/// Two-step Nesterov iteration. `points` holds the `y_k` and `companion`
/// the `x_k`. The start `x_{-1} = y_0 - α_0 ∇E(y_0)` makes the `y` sequence
/// coincide with [`nesterov_one_step_iterate`] when `γ = αβ`.
pub fn nesterov_two_step_iterate(
    oracle: &dyn Objective,
    y0: &DVector<f64>,
    alpha: &Schedule,
    beta: &Schedule,
    limit: IterationLimit,
) -> Result<IterateSequence> {
    check_dim("y_0", oracle.dim(), y0.len())?;
    alpha.check_nonnegative("alpha")?;
    beta.check_nonnegative("beta")?;
    let g0 = oracle.gradient(y0);
    let mut x_prev = y0 - &g0 * alpha.at(0, "alpha")?;
    let mut seq = IterateSequence::start(y0.clone(), g0);
    if initial_converged(&mut seq, &limit) {
        return Ok(seq);
    }
    for k in 0..limit.max_iters {
        let (a, b) = (alpha.at(k, "alpha")?, beta.at(k, "beta")?);
        let (x_k, y_next) = two_step_update(&seq.points[k], &x_prev, &seq.gradients[k], a, b);
        let g_next = oracle.gradient(&y_next);
        seq.companion.push(x_k.clone());
        x_prev = x_k;
        let rec = StepRecord {
            alpha: a,
            beta: b,
            gamma: a * b,
            beta_cg: None,
            direction: None,
        };
        if !seq.advance(y_next, g_next, rec, &limit) {
            break;
        }
    }
    Ok(seq)
}

/// Coefficients of the one-step scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Map flow gains and a step `h` to `(α, β, γ) = (γ_a h², 1 - γ_b h, γ_c h)`.
pub fn flow_to_discrete(gains: &DirectGains, h: f64) -> Result<DiscreteCoefficients> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid("h", format!("must be finite and > 0, got {h}")));
    }
    let beta = 1.0 - gains.gamma_b * h;
    if beta < 0.0 {
        return Err(Error::invalid(
            "h",
            format!("1 - gamma_b h = {beta} < 0 gives a negative momentum coefficient"),
        ));
    }
    Ok(DiscreteCoefficients {
        alpha: gains.gamma_a * h * h,
        beta,
        gamma: gains.gamma_c * h,
    })
}

/// Semi-implicit Euler step of `ẍ = -W⁻¹(γ_a ∇E + γ_b ẋ)`:
/// `v₊ = v - h W⁻¹(γ_a g + γ_b v)`, `x₊ = x + h v₊`.
///
/// Any metric kind is accepted; the Hessian and quasi-Newton kinds give the
/// accelerated Newton and quasi-Newton steps, the identity gives a Polyak step.
pub fn accelerated_newton_step(
    oracle: &dyn Objective,
    metric: &MetricSpec,
    x_k: &DVector<f64>,
    v_k: &DVector<f64>,
    gains: &FeedbackGains,
    h: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("x_k", oracle.dim(), x_k.len())?;
    check_dim("v_k", oracle.dim(), v_k.len())?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid("h", format!("must be finite and > 0, got {h}")));
    }
    let g = oracle.gradient(x_k);
    Ok(newton_update(oracle, metric, x_k, v_k, &g, gains, h)?)
}

fn newton_update(
    oracle: &dyn Objective,
    metric: &MetricSpec,
    x_k: &DVector<f64>,
    v_k: &DVector<f64>,
    g_k: &DVector<f64>,
    gains: &FeedbackGains,
    h: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let w = metric_matrix(metric, oracle, x_k)?;
    let force = g_k * gains.gamma_a + v_k * gains.gamma_b;
    let v_next = v_k - metric_solve(&w, &force)? * h;
    let x_next = x_k + &v_next * h;
    Ok((x_next, v_next))
}

/// Repeated [`accelerated_newton_step`]. For the quasi-Newton kind `B` is
/// updated after every step from `(x_{k+1} - x_k, g_{k+1} - g_k)`.
/// `companion` holds the velocities `v_0, v_1, ...`.
pub fn accelerated_newton_iterate(
    oracle: &dyn Objective,
    metric: &MetricSpec,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    gains: &FeedbackGains,
    h: f64,
    limit: IterationLimit,
) -> Result<IterateSequence> {
    check_dim("x_0", oracle.dim(), x0.len())?;
    check_dim("v_0", oracle.dim(), v0.len())?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid("h", format!("must be finite and > 0, got {h}")));
    }
    metric.validate()?;
    let mut metric = metric.clone();
    let mut seq = IterateSequence::start(x0.clone(), oracle.gradient(x0));
    seq.companion.push(v0.clone());
    if initial_converged(&mut seq, &limit) {
        return Ok(seq);
    }
    for k in 0..limit.max_iters {
        let x = &seq.points[k];
        let v = &seq.companion[k];
        let (x_next, v_next) = newton_update(oracle, &metric, x, v, &seq.gradients[k], gains, h)?;
        let g_next = oracle.gradient(&x_next);
        if metric.kind == MetricKind::QuasiNewton {
            let s = &x_next - x;
            let y = &g_next - &seq.gradients[k];
            metric = quasi_newton_update(&metric, &s, &y)?;
        }
        let rec = StepRecord {
            alpha: gains.gamma_a * h * h,
            beta: 1.0 - gains.gamma_b * h,
            gamma: 0.0,
            beta_cg: None,
            direction: Some(v.clone()),
        };
        seq.companion.push(v_next);
        if !seq.advance(x_next, g_next, rec, &limit) {
            break;
        }
    }
    Ok(seq)
}
