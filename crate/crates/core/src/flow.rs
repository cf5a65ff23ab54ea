//! Closed-loop integration of the controlled double integrator.
//!
//! The augmented state carries the primal variables `(x, v, y)` with the swept
//! cost `y = E(x)` and the adjoints `(λ_x, λ_v, λ_y)`:
//!
//! ```text
//! ẋ = v            λ̇_x = -λ_y ∇²E(x) v
//! v̇ = u            λ̇_v = -λ_x - λ_y ∇E(x)
//! ẏ = ∇E(x)ᵀ v     λ̇_y = 0
//! ```
//!
//! Controllers always receive the singular-arc adjoint `λ_x = -∇E(x)`; the
//! co-integrated `λ_x` is carried along only so its consistency with that
//! identity can be verified. `λ_y` is normalized to 1.

use std::ops::{Add, Mul};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::clf::ClfParams;
use crate::control::{synthesize, Control, ControllerSpec};
use crate::error::{check_dim, Error, Result};
use crate::metric::{quasi_newton_update, MetricKind};
use crate::objective::Objective;

/// States with `‖x‖` or `‖v‖` above this are treated as divergent.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub y: f64,
    pub lambda_x: DVector<f64>,
    pub lambda_v: DVector<f64>,
    pub lambda_y: f64,
}

impl AugmentedState {
    /// Boundary data at `t0`: `y = E(x0)`, `λ_x = -∇E(x0)`, `λ_v = 0`, `λ_y = 1`.
    pub fn consistent(oracle: &dyn Objective, x0: DVector<f64>, v0: DVector<f64>, t0: f64) -> Result<Self> {
        check_dim("initial x", oracle.dim(), x0.len())?;
        check_dim("initial v", oracle.dim(), v0.len())?;
        let n = x0.len();
        Ok(AugmentedState {
            t: t0,
            y: oracle.value(&x0),
            lambda_x: -oracle.gradient(&x0),
            lambda_v: DVector::zeros(n),
            lambda_y: 1.0,
            x: x0,
            v: v0,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    fn is_finite(&self) -> bool {
        let finite = |v: &DVector<f64>| v.iter().all(|e| e.is_finite());
        self.t.is_finite()
            && self.y.is_finite()
            && finite(&self.x)
            && finite(&self.v)
            && finite(&self.lambda_x)
            && finite(&self.lambda_v)
    }

    fn advanced(&self, d: &StateDerivative, h: f64) -> AugmentedState {
        AugmentedState {
            t: self.t + h,
            x: &self.x + &d.x * h,
            v: &self.v + &d.v * h,
            y: self.y + d.y * h,
            lambda_x: &self.lambda_x + &d.lambda_x * h,
            lambda_v: &self.lambda_v + &d.lambda_v * h,
            lambda_y: self.lambda_y + d.lambda_y * h,
        }
    }
}

/// Time derivative of an [`AugmentedState`] (the `t` component is 1).
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub y: f64,
    pub lambda_x: DVector<f64>,
    pub lambda_v: DVector<f64>,
    pub lambda_y: f64,
}

impl Add for StateDerivative {
    type Output = StateDerivative;

    fn add(self, o: StateDerivative) -> StateDerivative {
        StateDerivative {
            x: self.x + o.x,
            v: self.v + o.v,
            y: self.y + o.y,
            lambda_x: self.lambda_x + o.lambda_x,
            lambda_v: self.lambda_v + o.lambda_v,
            lambda_y: self.lambda_y + o.lambda_y,
        }
    }
}

impl Mul<f64> for StateDerivative {
    type Output = StateDerivative;

    fn mul(self, k: f64) -> StateDerivative {
        StateDerivative {
            x: self.x * k,
            v: self.v * k,
            y: self.y * k,
            lambda_x: self.lambda_x * k,
            lambda_v: self.lambda_v * k,
            lambda_y: self.lambda_y * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Auxiliary system only; `λ_v` and `λ_y` stay frozen.
    #[default]
    Reduced,
    /// Full primal-dual extremal system including `λ̇_v`.
    FullPrimalDual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    /// Velocity first, then position with the new velocity.
    SemiImplicitEuler,
}

impl Integrator {
    pub fn order(self) -> i32 {
        match self {
            Integrator::Rk4 => 4,
            Integrator::SemiImplicitEuler => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Integrator::Rk4 => "rk4",
            Integrator::SemiImplicitEuler => "semi_implicit_euler",
        }
    }
}

/// Derivative of the closed loop at `s`, plus the control that produced it.
pub fn closed_loop_rhs_with_control(
    controller: &ControllerSpec,
    oracle: &dyn Objective,
    s: &AugmentedState,
    mode: Mode,
) -> Result<(StateDerivative, Control)> {
    let n = oracle.dim();
    check_dim("state x", n, s.x.len())?;
    check_dim("state v", n, s.v.len())?;
    check_dim("state λ_x", n, s.lambda_x.len())?;
    check_dim("state λ_v", n, s.lambda_v.len())?;
    let g = oracle.gradient(&s.x);
    let h = oracle.hessian(&s.x);
    let singular_lambda = -&g;
    let control = synthesize(controller, oracle, &s.x, &singular_lambda, &s.v)?;
    let lambda_y = match mode {
        Mode::Reduced => 1.0,
        Mode::FullPrimalDual => s.lambda_y,
    };
    let lambda_v = match mode {
        Mode::Reduced => DVector::zeros(n),
        Mode::FullPrimalDual => -&s.lambda_x - &g * lambda_y,
    };
    let d = StateDerivative {
        x: s.v.clone(),
        v: control.u.clone(),
        y: g.dot(&s.v),
        lambda_x: (h * &s.v) * -lambda_y,
        lambda_v,
        lambda_y: 0.0,
    };
    Ok((d, control))
}

pub fn closed_loop_rhs(
    controller: &ControllerSpec,
    oracle: &dyn Objective,
    s: &AugmentedState,
    mode: Mode,
) -> Result<StateDerivative> {
    closed_loop_rhs_with_control(controller, oracle, s, mode).map(|(d, _)| d)
}

/// One step of size `h` from `s`.
pub fn step(
    controller: &ControllerSpec,
    oracle: &dyn Objective,
    s: &AugmentedState,
    h: f64,
    method: Integrator,
    mode: Mode,
) -> Result<AugmentedState> {
    match method {
        Integrator::Rk4 => {
            let k1 = closed_loop_rhs(controller, oracle, s, mode)?;
            let k2 = closed_loop_rhs(controller, oracle, &s.advanced(&k1, 0.5 * h), mode)?;
            let k3 = closed_loop_rhs(controller, oracle, &s.advanced(&k2, 0.5 * h), mode)?;
            let k4 = closed_loop_rhs(controller, oracle, &s.advanced(&k3, h), mode)?;
            let slope = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (1.0 / 6.0);
            Ok(s.advanced(&slope, h))
        }
        Integrator::SemiImplicitEuler => {
            let d = closed_loop_rhs(controller, oracle, s, mode)?;
            let v_next = &s.v + &d.v * h;
            let g = oracle.gradient(&s.x);
            let hess = oracle.hessian(&s.x);
            let lambda_y = if mode == Mode::Reduced { 1.0 } else { s.lambda_y };
            Ok(AugmentedState {
                t: s.t + h,
                x: &s.x + &v_next * h,
                y: s.y + h * g.dot(&v_next),
                lambda_x: &s.lambda_x - (hess * &v_next) * (h * lambda_y),
                lambda_v: &s.lambda_v + &d.lambda_v * h,
                lambda_y: s.lambda_y,
                v: v_next,
            })
        }
    }
}

/// Termination of a flow: `‖∇E‖ ≤ tol_g` and `‖v‖ ≤ tol_v`, or `t ≥ t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub tol_g: f64,
    pub tol_v: f64,
    pub t_max: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            tol_g: 1e-6,
            tol_v: 1e-6,
            t_max: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub h: f64,
    pub method: Integrator,
    pub mode: Mode,
    pub stop: StoppingRule,
    /// Record every `stride`-th step; the first and last states are always kept.
    pub stride: usize,
    /// Steps between secant updates of a quasi-Newton metric.
    pub qn_interval: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            h: 1e-3,
            method: Integrator::Rk4,
            mode: Mode::Reduced,
            stop: StoppingRule::default(),
            stride: 1,
            qn_interval: 10,
        }
    }
}

impl IntegrateOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::invalid("h", format!("must be finite and > 0, got {}", self.h)));
        }
        if !(self.stop.t_max > 0.0) {
            return Err(Error::invalid("t_max", format!("must be > 0, got {}", self.stop.t_max)));
        }
        if !(self.stop.tol_g >= 0.0 && self.stop.tol_v >= 0.0) {
            return Err(Error::invalid("tolerances", "tol_g and tol_v must be >= 0"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride", "must be >= 1"));
        }
        if self.qn_interval == 0 {
            return Err(Error::invalid("qn_interval", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: AugmentedState,
    pub u: DVector<f64>,
    pub e: f64,
    pub grad_norm: f64,
    /// `V(-∇E(x), v)`.
    pub v_clf: f64,
    /// Lie derivative of `V` along the closed loop at this state.
    pub lie_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    TimeLimit,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub problem: String,
    pub family: String,
    pub metric: MetricKind,
    pub clf: ClfParams,
    pub h: f64,
    pub integrator: Integrator,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub meta: TrajectoryMeta,
    pub samples: Vec<Sample>,
    pub stop: StopReason,
    /// Number of integration steps taken.
    pub steps: usize,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories hold at least one sample")
    }

    pub fn diverged(&self) -> bool {
        self.stop == StopReason::Diverged
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.state.dim())
    }
}

fn sample(
    spec: &ControllerSpec,
    oracle: &dyn Objective,
    state: AugmentedState,
) -> Result<Sample> {
    let g = oracle.gradient(&state.x);
    let lambda = -&g;
    let control = synthesize(spec, oracle, &state.x, &lambda, &state.v)?;
    let v_clf = spec.clf.value(&lambda, &state.v)?;
    let lie_v = spec.clf.lie_derivative(oracle, &state.x, &lambda, &state.v, &control.u)?;
    Ok(Sample {
        e: oracle.value(&state.x),
        grad_norm: g.norm(),
        u: control.u,
        v_clf,
        lie_v,
        state,
    })
}

/// Integrate the closed loop from `s0` until the stopping rule fires.
///
/// Divergence (non-finite values or `‖x‖`, `‖v‖` beyond
/// [`DIVERGENCE_BOUND`]) truncates the record and marks it
/// [`StopReason::Diverged`]. A quasi-Newton metric inside `controller` is
/// updated along the way from secant pairs spaced `qn_interval` steps apart.
pub fn integrate(
    controller: &ControllerSpec,
    oracle: &dyn Objective,
    s0: AugmentedState,
    opts: &IntegrateOptions,
    problem: &str,
) -> Result<TrajectoryRecord> {
    opts.validate()?;
    controller.validate_structure()?;
    check_dim("initial state", oracle.dim(), s0.dim())?;
    let mut spec = controller.clone();
    let meta = TrajectoryMeta {
        problem: problem.to_string(),
        family: spec.law.family().to_string(),
        metric: spec.metric.kind,
        clf: spec.clf,
        h: opts.h,
        integrator: opts.method,
        mode: opts.mode,
    };

    let t0 = s0.t;
    let max_steps = ((opts.stop.t_max / opts.h) - 1e-9).ceil().max(0.0) as usize;
    let converged = |smp: &Sample| smp.grad_norm <= opts.stop.tol_g && smp.state.v.norm() <= opts.stop.tol_v;

    let mut current = sample(&spec, oracle, s0)?;
    let mut samples = Vec::new();
    let mut stop = StopReason::TimeLimit;
    let mut steps = 0;
    let mut qn_anchor = (current.state.x.clone(), oracle.gradient(&current.state.x));

    loop {
        if converged(&current) {
            stop = StopReason::Converged;
            samples.push(current);
            break;
        }
        if steps >= max_steps {
            samples.push(current);
            break;
        }
        let mut next = step(&spec, oracle, &current.state, opts.h, opts.method, opts.mode)?;
        steps += 1;
        next.t = t0 + steps as f64 * opts.h;
        if !next.is_finite() || next.x.norm() > DIVERGENCE_BOUND || next.v.norm() > DIVERGENCE_BOUND {
            stop = StopReason::Diverged;
            samples.push(current);
            break;
        }
        if spec.metric.kind == MetricKind::QuasiNewton && steps % opts.qn_interval == 0 {
            let g = oracle.gradient(&next.x);
            let s = &next.x - &qn_anchor.0;
            let dg = &g - &qn_anchor.1;
            spec.metric = quasi_newton_update(&spec.metric, &s, &dg)?;
            qn_anchor = (next.x.clone(), g);
        }
        let prev = std::mem::replace(&mut current, sample(&spec, oracle, next)?);
        if (steps - 1) % opts.stride == 0 {
            samples.push(prev);
        }
    }

    Ok(TrajectoryRecord {
        meta,
        samples,
        stop,
        steps,
    })
}

/// Final-time residuals of the target conditions and transversality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalResiduals {
    pub r_grad: f64,
    pub r_v: f64,
    pub r_lambda_x: f64,
    pub r_lambda_v: f64,
}

pub fn terminal_residuals(s: &AugmentedState, oracle: &dyn Objective) -> TerminalResiduals {
    TerminalResiduals {
        r_grad: oracle.gradient(&s.x).norm(),
        r_v: s.v.norm(),
        r_lambda_x: s.lambda_x.norm(),
        r_lambda_v: s.lambda_v.norm(),
    }
}
