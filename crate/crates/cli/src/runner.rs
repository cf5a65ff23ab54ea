//! Builds problems from config and executes flows and discrete methods.

use accelflow::control::FeedbackGains;
use accelflow::discrete::{
    accelerated_newton_iterate, cg_iterate, heavy_ball_iterate, nesterov_one_step_iterate,
    nesterov_two_step_iterate, BetaCgRule, IterStop, IterateSequence, IterationLimit, Schedule, StepRule,
};
use accelflow::flow::{
    integrate, terminal_residuals, AugmentedState, IntegrateOptions, StopReason, StoppingRule, TerminalResiduals,
    TrajectoryRecord,
};
use accelflow::metric::{MetricKind, MetricSpec};
use accelflow::objective::{conditioned_matrix, make_log_sum_exp, make_quadratic, make_rosenbrock, ProblemInstance};
use accelflow::verify::{
    check_adjoint_consistency, check_dissipation, check_sequence_stationarity, check_singular_arc,
    check_stationarity, DissipationMode, OrderTolerance, VerificationReport,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{BetaCgConfig, CheckName, DiscreteConfig, DiscreteMethod, FlowConfig, ProblemName, RunConfig, VerifyConfig};

/// Build the problem of a resolved config. All randomness comes from `seed`.
pub fn build_problem(c: &RunConfig) -> accelflow::Result<ProblemInstance> {
    let p = &c.problem;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let x0 = DVector::from_vec(p.x0.clone().unwrap_or_default());
    match p.name {
        ProblemName::Quadratic => {
            let q = conditioned_matrix(p.dim.unwrap_or(10), p.condition.unwrap_or(100.0), &mut rng)?;
            let x_star = DVector::from_vec(p.x_star.clone().unwrap_or_default());
            make_quadratic(q, x_star, x0)
        }
        ProblemName::Rosenbrock => make_rosenbrock(x0),
        ProblemName::LogSumExp => {
            let (n, m, s) = (p.dim.unwrap_or(4), p.terms.unwrap_or(6), p.scale.unwrap_or(1.0));
            let dirs = DMatrix::from_fn(m, n, |_, _| s * rng.random_range(-1.0..1.0));
            make_log_sum_exp(&dirs, x0)
        }
    }
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Flow(TrajectoryRecord),
    Discrete(IterateSequence),
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub problem: ProblemInstance,
    pub outcome: Outcome,
    pub report: VerificationReport,
}

impl RunResult {
    pub fn diverged(&self) -> bool {
        match &self.outcome {
            Outcome::Flow(t) => t.stop == StopReason::Diverged,
            Outcome::Discrete(s) => s.stop == IterStop::Diverged,
        }
    }

    /// `(time or iteration, ‖∇E‖)` along the stored samples.
    pub fn gradient_history(&self) -> Vec<(f64, f64)> {
        match &self.outcome {
            Outcome::Flow(t) => t.samples.iter().map(|s| (s.state.t, s.grad_norm)).collect(),
            Outcome::Discrete(s) => s.gradient_norms().into_iter().enumerate().map(|(k, g)| (k as f64, g)).collect(),
        }
    }

    pub fn final_point(&self) -> &DVector<f64> {
        match &self.outcome {
            Outcome::Flow(t) => &t.last().state.x,
            Outcome::Discrete(s) => s.last(),
        }
    }

    pub fn terminal(&self) -> Option<TerminalResiduals> {
        match &self.outcome {
            Outcome::Flow(t) => Some(terminal_residuals(&t.last().state, &*self.problem.oracle)),
            Outcome::Discrete(_) => None,
        }
    }
}

/// Run a resolved, validated config.
pub fn execute(c: &RunConfig) -> accelflow::Result<RunResult> {
    let problem = build_problem(c)?;
    let outcome = match (&c.method.flow, &c.method.discrete) {
        (Some(f), _) => Outcome::Flow(run_flow(f, &problem, c.output.stride)?),
        (None, Some(d)) => Outcome::Discrete(run_discrete(d, &problem)?),
        (None, None) => unreachable!("validated configs carry a method"),
    };
    let verify = c.verify.clone().expect("resolved configs carry a verify block");
    let report = verify_outcome(c, &verify, &problem, &outcome)?;
    Ok(RunResult {
        config: c.clone(),
        problem,
        outcome,
        report,
    })
}

fn run_flow(f: &FlowConfig, p: &ProblemInstance, stride: usize) -> accelflow::Result<TrajectoryRecord> {
    let spec = f.controller()?;
    let v0 = DVector::from_vec(f.v0.clone().unwrap_or_else(|| vec![0.0; p.dim()]));
    let s0 = AugmentedState::consistent(&*p.oracle, p.x0.clone(), v0, 0.0)?;
    let opts = IntegrateOptions {
        h: f.h,
        method: f.integrator,
        mode: f.mode,
        stop: StoppingRule {
            tol_g: f.tol_g,
            tol_v: f.tol_v,
            t_max: f.t_max,
        },
        stride,
        qn_interval: f.qn_interval,
    };
    integrate(&spec, &*p.oracle, s0, &opts, &p.name)
}

fn run_discrete(d: &DiscreteConfig, p: &ProblemInstance) -> accelflow::Result<IterateSequence> {
    let oracle = &*p.oracle;
    let limit = IterationLimit {
        max_iters: d.max_iters,
        tol_g: d.tol_g,
    };
    let zero = Schedule::Constant(0.0);
    let alpha = d.alpha.as_ref().unwrap_or(&zero);
    let beta = d.beta.as_ref().unwrap_or(&zero);
    match d.name {
        DiscreteMethod::HeavyBall => heavy_ball_iterate(oracle, &p.x0, &p.x0, alpha, beta, limit),
        DiscreteMethod::Nesterov1 => {
            let gamma = d.gamma.as_ref().unwrap_or(&zero);
            nesterov_one_step_iterate(oracle, &p.x0, alpha, beta, gamma, limit)
        }
        DiscreteMethod::Nesterov2 => nesterov_two_step_iterate(oracle, &p.x0, alpha, beta, limit),
        DiscreteMethod::Cg => {
            let step = match &d.alpha {
                Some(s) => StepRule::Given(s.clone()),
                None => StepRule::ExactLineSearch,
            };
            let rule = match &d.beta_cg {
                Some(BetaCgConfig::Given(s)) => BetaCgRule::Given(s.clone()),
                _ => BetaCgRule::FletcherReeves,
            };
            cg_iterate(oracle, &p.x0, limit, &step, &rule)
        }
        DiscreteMethod::AccelNewton | DiscreteMethod::AccelQn => {
            let kind = match d.name {
                DiscreteMethod::AccelQn => MetricKind::QuasiNewton,
                _ => d.metric.unwrap_or(MetricKind::Hessian),
            };
            let metric = MetricSpec {
                kind,
                eig_floor: d.eig_floor.unwrap_or(accelflow::metric::DEFAULT_EIG_FLOOR),
                qn_state: None,
            };
            let gains = FeedbackGains {
                gamma_a: d.gamma_a.unwrap_or(1.0),
                gamma_b: d.gamma_b.unwrap_or(1.0),
            };
            let v0 = DVector::from_vec(d.v0.clone().unwrap_or_else(|| vec![0.0; p.dim()]));
            accelerated_newton_iterate(oracle, &metric, &p.x0, &v0, &gains, d.h.unwrap_or(0.0), limit)
        }
    }
}

/// Run the configured checks against a flow trajectory or iterate sequence.
pub fn verify_outcome(
    c: &RunConfig,
    v: &VerifyConfig,
    p: &ProblemInstance,
    outcome: &Outcome,
) -> accelflow::Result<VerificationReport> {
    let oracle = &*p.oracle;
    let mut reports = Vec::new();
    match outcome {
        Outcome::Flow(traj) => {
            let f = c.method.flow.as_ref().expect("flow outcome comes from a flow config");
            for check in &v.checks {
                reports.push(match check {
                    CheckName::Dissipation => check_dissipation(
                        traj,
                        oracle,
                        &f.clf,
                        v.dissipation.unwrap_or(DissipationMode::Strict),
                        v.tol,
                    )?,
                    CheckName::AdjointConsistency => check_adjoint_consistency(
                        traj,
                        oracle,
                        &OrderTolerance {
                            constant: v.order_constant,
                            floor: v.order_floor,
                        },
                    )?,
                    CheckName::SingularArc => check_singular_arc(traj, v.singular_arc_tol),
                    CheckName::Stationarity => check_stationarity(
                        traj,
                        oracle,
                        &StoppingRule {
                            tol_g: f.tol_g,
                            tol_v: f.tol_v,
                            t_max: f.t_max,
                        },
                    )?,
                });
            }
        }
        Outcome::Discrete(seq) => {
            let d = c.method.discrete.as_ref().expect("discrete outcome comes from a discrete config");
            if v.checks.contains(&CheckName::Stationarity) {
                reports.push(check_sequence_stationarity(seq, oracle, d.tol_g)?);
            }
        }
    }
    Ok(VerificationReport::merge(reports))
}

/// Gradient tolerance decades `1, 1e-1, ...` down to the decade of `tol_g`.
pub fn decades(tol_g: f64) -> Vec<f64> {
    let last = if tol_g > 0.0 { (-tol_g.log10()).ceil().clamp(0.0, 16.0) as i32 } else { 16 };
    (0..=last).map(|k| 10f64.powi(-k)).collect()
}

/// First time (or iteration) at which `‖∇E‖ ≤ tol`.
pub fn first_reach(history: &[(f64, f64)], tol: f64) -> Option<f64> {
    history.iter().find(|(_, g)| *g <= tol).map(|(t, _)| *t)
}

pub fn tol_g(c: &RunConfig) -> f64 {
    match (&c.method.flow, &c.method.discrete) {
        (Some(f), _) => f.tol_g,
        (None, Some(d)) => d.tol_g,
        (None, None) => 0.0,
    }
}
