mod common;

use accelflow::clf::ClfParams;
use accelflow::control::{gains_from_sigma, ControlLaw, ControllerSpec, DirectGains};
use accelflow::flow::{
    integrate, step, terminal_residuals, AugmentedState, IntegrateOptions, Integrator, Mode,
    StopReason, StoppingRule, TrajectoryRecord,
};
use accelflow::metric::MetricSpec;
use accelflow::objective::{make_quadratic, Objective, ProblemInstance};
use common::quadratic10;
use nalgebra::{DMatrix, DVector};

fn direct_default() -> ControllerSpec {
    let clf = ClfParams::default();
    ControllerSpec::new(clf, MetricSpec::euclidean(), ControlLaw::Direct(DirectGains::matched(&clf, 2.0))).unwrap()
}

fn run(spec: &ControllerSpec, p: &ProblemInstance, h: f64, t_max: f64, mode: Mode) -> TrajectoryRecord {
    let s0 = AugmentedState::consistent(&*p.oracle, p.x0.clone(), DVector::zeros(p.dim()), 0.0).unwrap();
    let opts = IntegrateOptions {
        h,
        mode,
        stop: StoppingRule { tol_g: 0.0, tol_v: 0.0, t_max },
        ..IntegrateOptions::default()
    };
    integrate(spec, &*p.oracle, s0, &opts, &p.name).unwrap()
}

fn swept_cost_error(traj: &TrajectoryRecord, f: &dyn Objective) -> f64 {
    let s = &traj.last().state;
    (s.y - f.value(&s.x)).abs()
}

#[test]
fn swept_cost_error_is_fourth_order() {
    let (_, p) = quadratic10();
    let spec = direct_default();
    // h γ_c λ_max(Q) = 1 puts RK4 in its asymptotic regime
    let coarse = swept_cost_error(&run(&spec, &p, 0.005, 2.0, Mode::Reduced), &*p.oracle);
    let fine = swept_cost_error(&run(&spec, &p, 0.0025, 2.0, Mode::Reduced), &*p.oracle);
    let ratio = coarse / fine;
    assert!(coarse > 1e-12, "coarse error {coarse:e} is at roundoff");
    assert!((12.0..24.0).contains(&ratio), "ratio {ratio}, errors {coarse:e} {fine:e}");
}

#[test]
fn terminal_state_error_is_fourth_order() {
    let (_, p) = quadratic10();
    let spec = direct_default();
    let reference = run(&spec, &p, 1e-5, 1.0, Mode::Reduced).last().state.x.clone();
    let err = |h: f64| (&run(&spec, &p, h, 1.0, Mode::Reduced).last().state.x - &reference).norm();
    let (e1, e2) = (err(0.01), err(0.005));
    let ratio = e1 / e2;
    assert!((12.0..24.0).contains(&ratio), "ratio {ratio}, errors {e1:e} {e2:e}");
}

#[test]
fn semi_implicit_euler_is_first_order() {
    let (_, p) = quadratic10();
    let spec = direct_default();
    let reference = run(&spec, &p, 1e-5, 1.0, Mode::Reduced).last().state.x.clone();
    let err = |h: f64| {
        let s0 = AugmentedState::consistent(&*p.oracle, p.x0.clone(), DVector::zeros(10), 0.0).unwrap();
        let mut s = s0;
        for _ in 0..(1.0 / h).round() as usize {
            s = step(&spec, &*p.oracle, &s, h, Integrator::SemiImplicitEuler, Mode::Reduced).unwrap();
        }
        (&s.x - &reference).norm()
    };
    let ratio = err(0.002) / err(0.001);
    assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
}

#[test]
fn lyapunov_value_never_increases() {
    let (_, p) = quadratic10();
    let clf = ClfParams::default();
    // the Hessian-metric rate controller is stiff: at h = 1e-3 RK4 lets V
    // rise by ~5e-3 near t = 4, at h = 1e-4 not at all
    let specs = [
        (direct_default(), 1e-3),
        (ControllerSpec::new(clf, MetricSpec::euclidean(), ControlLaw::MinPStar { rate_eta: 1.0 }).unwrap(), 1e-3),
        (ControllerSpec::new(clf, MetricSpec::hessian(), ControlLaw::MinPStar { rate_eta: 0.5 }).unwrap(), 1e-4),
    ];
    for (spec, h) in &specs {
        let traj = run(spec, &p, *h, 10.0, Mode::Reduced);
        for w in traj.samples.windows(2) {
            assert!(
                w[1].v_clf <= w[0].v_clf + 1e-10,
                "{} V rose from {} to {} at t={}",
                spec.law.family(),
                w[0].v_clf,
                w[1].v_clf,
                w[1].state.t
            );
        }
        assert!(traj.samples.iter().all(|s| s.lie_v < 1e-12));
    }
}

#[test]
fn hessian_metric_energy_decreases() {
    // ẍ = -Q⁻¹(γ_a ∇E + γ_b ẋ) loses γ_a E + ½ ẋᵀQẋ at rate γ_b |ẋ|²
    let (q, p) = quadratic10();
    let clf = ClfParams::new(1.0, 2.0, -1.0).unwrap();
    let gains = gains_from_sigma(&clf, 5.0).unwrap();
    let spec = ControllerSpec::new(clf, MetricSpec::hessian(), ControlLaw::Generalized { sigma_q: 5.0 }).unwrap();
    let traj = run(&spec, &p, 1e-3, 20.0, Mode::Reduced);
    let energy: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| gains.gamma_a * s.e + 0.5 * s.state.v.dot(&(&q * &s.state.v)))
        .collect();
    for (i, w) in energy.windows(2).enumerate() {
        assert!(w[1] <= w[0] + 1e-8, "energy rose at sample {i}: {} -> {}", w[0], w[1]);
    }
    assert!(energy.last().unwrap() < &(0.5 * energy[0]));
}

#[test]
fn scalar_direct_flow_matches_closed_form() {
    // E = x², so ẍ + 5ẋ + 2x = 0 under gains (1, 1, 2)
    let p = make_quadratic(DMatrix::from_element(1, 1, 2.0), DVector::zeros(1), DVector::from_element(1, 1.0)).unwrap();
    let spec = ControllerSpec::new(
        ClfParams::default(),
        MetricSpec::euclidean(),
        ControlLaw::Direct(DirectGains { gamma_a: 1.0, gamma_b: 1.0, gamma_c: 2.0 }),
    )
    .unwrap();
    let s0 = AugmentedState::consistent(&*p.oracle, p.x0.clone(), DVector::zeros(1), 0.0).unwrap();
    let opts = IntegrateOptions {
        h: 1e-3,
        stop: StoppingRule { tol_g: 1e-6, tol_v: f64::INFINITY, t_max: 40.0 },
        ..IntegrateOptions::default()
    };
    let traj = integrate(&spec, &*p.oracle, s0, &opts, "quadratic").unwrap();
    assert_eq!(traj.stop, StopReason::Converged);
    assert!(traj.last().state.t < 40.0);
    let (r1, r2) = ((-5.0 + 17f64.sqrt()) / 2.0, (-5.0 - 17f64.sqrt()) / 2.0);
    let exact = |t: f64| (r2 * (r1 * t).exp() - r1 * (r2 * t).exp()) / (r2 - r1);
    let worst = traj.samples.iter().map(|s| (s.state.x[0] - exact(s.state.t)).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "worst deviation {worst:e}");
}

#[test]
fn converged_run_has_small_terminal_residuals() {
    let (_, p) = quadratic10();
    let s0 = AugmentedState::consistent(&*p.oracle, p.x0.clone(), DVector::zeros(10), 0.0).unwrap();
    let opts = IntegrateOptions { h: 1e-3, mode: Mode::FullPrimalDual, ..IntegrateOptions::default() };
    let traj = integrate(&direct_default(), &*p.oracle, s0, &opts, "quadratic").unwrap();
    assert_eq!(traj.stop, StopReason::Converged);
    let r = terminal_residuals(&traj.last().state, &*p.oracle);
    assert!(r.r_grad <= 1e-6 && r.r_v <= 1e-6);
    assert!(r.r_lambda_x <= 1e-6 + 1e-9);
    assert!(r.r_lambda_v <= 1e-8);
}

#[test]
fn stride_thins_samples_but_keeps_endpoints() {
    let (_, p) = quadratic10();
    let full = run(&direct_default(), &p, 1e-2, 1.0, Mode::Reduced);
    let s0 = AugmentedState::consistent(&*p.oracle, p.x0.clone(), DVector::zeros(10), 0.0).unwrap();
    let opts = IntegrateOptions {
        h: 1e-2,
        stride: 7,
        stop: StoppingRule { tol_g: 0.0, tol_v: 0.0, t_max: 1.0 },
        ..IntegrateOptions::default()
    };
    let thin = integrate(&direct_default(), &*p.oracle, s0, &opts, "quadratic").unwrap();
    assert_eq!(thin.steps, full.steps);
    assert_eq!(thin.samples[0], full.samples[0]);
    assert_eq!(thin.last(), full.last());
    assert!(thin.samples.len() < full.samples.len() / 5);
    assert!(thin.samples.windows(2).all(|w| w[1].state.t > w[0].state.t));
}

#[test]
fn unstable_euler_step_reports_divergence() {
    let (_, p) = quadratic10();
    let s0 = AugmentedState::consistent(&*p.oracle, p.x0.clone(), DVector::zeros(10), 0.0).unwrap();
    let opts = IntegrateOptions {
        h: 0.5,
        method: Integrator::SemiImplicitEuler,
        ..IntegrateOptions::default()
    };
    let traj = integrate(&direct_default(), &*p.oracle, s0, &opts, "quadratic").unwrap();
    assert!(traj.diverged());
    assert!(traj.last().state.x.iter().all(|e| e.is_finite()));
}

#[test]
fn bad_options_are_rejected() {
    let (_, p) = quadratic10();
    let s0 = AugmentedState::consistent(&*p.oracle, p.x0.clone(), DVector::zeros(10), 0.0).unwrap();
    for opts in [
        IntegrateOptions { h: 0.0, ..IntegrateOptions::default() },
        IntegrateOptions { stride: 0, ..IntegrateOptions::default() },
        IntegrateOptions { stop: StoppingRule { tol_g: -1.0, ..StoppingRule::default() }, ..IntegrateOptions::default() },
    ] {
        assert!(integrate(&direct_default(), &*p.oracle, s0.clone(), &opts, "q").is_err());
    }
    let wrong = AugmentedState::consistent(&*p.oracle, p.x0.clone(), DVector::zeros(10), 0.0).unwrap();
    let small = make_quadratic(DMatrix::identity(2, 2), DVector::zeros(2), DVector::zeros(2)).unwrap();
    assert!(integrate(&direct_default(), &*small.oracle, wrong, &IntegrateOptions::default(), "q").is_err());
}
