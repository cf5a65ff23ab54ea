//! Numerical checks over recorded trajectories and iterate sequences.
//!
//! Every check recomputes what it needs from the raw states and the oracle.
//! Cached `V` and `lieV` values in a [`TrajectoryRecord`] are only compared
//! against the recomputed ones, never used directly.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::clf::ClfParams;
use crate::discrete::{IterStop, IterateSequence};
use crate::error::{check_dim, Error, Result};
use crate::flow::{Mode, StoppingRule, TrajectoryRecord};
use crate::objective::Objective;

/// Tolerance for cached vs recomputed `V` and `lieV`, relative to `max(|x|, 1)`.
pub const CACHE_TOLERANCE: f64 = 1e-12;

/// Bound on `max ‖λ_v‖` along a primal-dual trajectory.
pub const SINGULAR_ARC_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub index: usize,
    /// Time for flows; iteration count for sequences.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub outcome: Outcome,
    /// Extremal value of the checked quantity.
    pub worst_value: f64,
    pub tolerance: f64,
    pub location: Option<Location>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn not_applicable(name: &str, reason: &str) -> Self {
        Check {
            name: name.to_string(),
            outcome: Outcome::NotApplicable,
            worst_value: 0.0,
            tolerance: 0.0,
            location: None,
            detail: Some(reason.to_string()),
        }
    }

    /// Pass iff `worst <= tolerance` (or `<` when `strict`).
    fn bounded(name: &str, worst: Option<(f64, Location)>, tolerance: f64, strict: bool) -> Self {
        match worst {
            None => Check {
                name: name.to_string(),
                outcome: Outcome::Pass,
                worst_value: 0.0,
                tolerance,
                location: None,
                detail: Some("no applicable samples".into()),
            },
            Some((w, loc)) => {
                let ok = if strict { w < tolerance } else { w <= tolerance };
                Check {
                    name: name.to_string(),
                    outcome: if ok { Outcome::Pass } else { Outcome::Fail },
                    worst_value: w,
                    tolerance,
                    location: Some(loc),
                    detail: None,
                }
            }
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    fn failed(mut self, detail: impl Into<String>) -> Self {
        self.outcome = Outcome::Fail;
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub not_applicable: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub summary: Summary,
}

impl VerificationReport {
    pub fn from_checks(checks: Vec<Check>) -> Self {
        let mut summary = Summary::default();
        for c in &checks {
            match c.outcome {
                Outcome::Pass => summary.passed += 1,
                Outcome::Fail => summary.failed += 1,
                Outcome::NotApplicable => summary.not_applicable += 1,
            }
        }
        VerificationReport { checks, summary }
    }

    pub fn merge(reports: impl IntoIterator<Item = VerificationReport>) -> Self {
        Self::from_checks(reports.into_iter().flat_map(|r| r.checks).collect())
    }

    /// No check failed (not-applicable checks do not count against it).
    pub fn passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = match c.outcome {
                Outcome::Pass => "PASS",
                Outcome::Fail => "FAIL",
                Outcome::NotApplicable => "N/A ",
            };
            write!(f, "{status} {:<24} worst={:.3e} tol={:.3e}", c.name, c.worst_value, c.tolerance)?;
            if let Some(loc) = c.location {
                write!(f, " at #{} (t={})", loc.index, loc.t)?;
            }
            if let Some(d) = &c.detail {
                write!(f, " [{d}]")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "{} passed, {} failed, {} not applicable",
            self.summary.passed, self.summary.failed, self.summary.not_applicable
        )
    }
}

/// Track the largest value seen and where.
#[derive(Default)]
struct Worst(Option<(f64, Location)>);

impl Worst {
    fn offer(&mut self, value: f64, index: usize, t: f64) {
        let replace = match self.0 {
            None => true,
            // NaN is always the worst
            Some((w, _)) => value > w || (value.is_nan() && !w.is_nan()),
        };
        if replace {
            self.0 = Some((value, Location { index, t }));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DissipationMode {
    /// `lieV < tol` wherever `(λ, v) ≠ 0`.
    Strict,
    /// `lieV ≤ -η V + tol` and `V(t) ≤ V(t_0) e^{-η (t - t_0)} (1 + tol)`.
    Rate { eta: f64 },
}

/// Lyapunov dissipation along a flow, evaluated at `λ = -∇E(x)` with the
/// recorded control `u`.
///
/// Besides the dissipation checks the report contains `cache_consistency`,
/// comparing recorded `V`/`lieV` with the recomputed values.
pub fn check_dissipation(
    traj: &TrajectoryRecord,
    oracle: &dyn Objective,
    clf: &ClfParams,
    mode: DissipationMode,
    tol: f64,
) -> Result<VerificationReport> {
    clf.validate()?;
    if let DissipationMode::Rate { eta } = mode {
        if !(eta > 0.0) {
            return Err(Error::invalid("eta", format!("must be > 0, got {eta}")));
        }
    }
    let mut lie_worst = Worst::default();
    let mut decay_worst = Worst::default();
    let mut cache_worst = Worst::default();
    let first = match traj.samples.first() {
        Some(s) => s,
        None => return Ok(VerificationReport::default()),
    };
    let (t0, v0) = (first.state.t, recompute(oracle, clf, first)?.0);

    for (i, s) in traj.samples.iter().enumerate() {
        let t = s.state.t;
        let (v_clf, lie_v, at_origin) = recompute(oracle, clf, s)?;
        let cache = ((s.v_clf - v_clf).abs() / v_clf.abs().max(1.0))
            .max((s.lie_v - lie_v).abs() / lie_v.abs().max(1.0));
        cache_worst.offer(cache, i, t);
        if at_origin {
            continue;
        }
        match mode {
            DissipationMode::Strict => lie_worst.offer(lie_v, i, t),
            DissipationMode::Rate { eta } => {
                lie_worst.offer(lie_v + eta * v_clf, i, t);
                let envelope = v0 * (-eta * (t - t0)).exp();
                if envelope > 0.0 {
                    decay_worst.offer(v_clf / envelope - 1.0, i, t);
                } else if v_clf > 0.0 {
                    decay_worst.offer(f64::INFINITY, i, t);
                }
            }
        }
    }

    let mut checks = Vec::new();
    match mode {
        DissipationMode::Strict => checks.push(Check::bounded("dissipation_strict", lie_worst.0, tol, true)),
        DissipationMode::Rate { eta } => {
            checks.push(
                Check::bounded("dissipation_rate", lie_worst.0, tol, false)
                    .with_detail(format!("lieV + {eta} V")),
            );
            checks.push(Check::bounded("exponential_decay", decay_worst.0, tol, false));
        }
    }
    checks.push(Check::bounded("cache_consistency", cache_worst.0, CACHE_TOLERANCE, false));
    Ok(VerificationReport::from_checks(checks))
}

/// `(V, lieV, (λ, v) = 0)` at a sample, from its raw state and control.
fn recompute(oracle: &dyn Objective, clf: &ClfParams, s: &crate::flow::Sample) -> Result<(f64, f64, bool)> {
    let x = &s.state.x;
    check_dim("sample state", oracle.dim(), x.len())?;
    let lambda: DVector<f64> = -oracle.gradient(x);
    let v = &s.state.v;
    let at_origin = lambda.iter().chain(v.iter()).all(|&e| e == 0.0);
    let value = clf.value(&lambda, v)?;
    let lie = clf.lie_derivative(oracle, x, &lambda, v, &s.u)?;
    Ok((value, lie, at_origin))
}

/// Integrator-aware tolerance `C h^p + floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderTolerance {
    pub constant: f64,
    pub floor: f64,
}

impl Default for OrderTolerance {
    fn default() -> Self {
        OrderTolerance {
            constant: 1.0,
            floor: 1e-10,
        }
    }
}

impl OrderTolerance {
    pub fn at(&self, h: f64, order: i32) -> f64 {
        self.constant * h.powi(order) + self.floor
    }

    /// Calibrate `C` from the residual `r_h` observed at step `h`, with a
    /// safety factor on top.
    pub fn calibrated(r_h: f64, h: f64, order: i32, safety: f64, floor: f64) -> Self {
        OrderTolerance {
            constant: safety * r_h / h.powi(order),
            floor,
        }
    }
}

/// `max_t ‖λ_x(t) + ∇E(x(t))‖` for primal-dual trajectories.
pub fn check_adjoint_consistency(
    traj: &TrajectoryRecord,
    oracle: &dyn Objective,
    tol: &OrderTolerance,
) -> Result<VerificationReport> {
    const NAME: &str = "adjoint_consistency";
    if traj.meta.mode == Mode::Reduced {
        return Ok(VerificationReport::from_checks(vec![Check::not_applicable(
            NAME,
            "reduced mode: λ_x is -∇E by definition",
        )]));
    }
    let mut worst = Worst::default();
    for (i, s) in traj.samples.iter().enumerate() {
        check_dim("sample state", oracle.dim(), s.state.x.len())?;
        let r = (&s.state.lambda_x + oracle.gradient(&s.state.x)).norm();
        worst.offer(r, i, s.state.t);
    }
    let bound = tol.at(traj.meta.h, traj.meta.integrator.order());
    Ok(VerificationReport::from_checks(vec![Check::bounded(NAME, worst.0, bound, false)]))
}

/// Adjoint residual `max_t ‖λ_x + ∇E‖` with no pass/fail attached, for
/// step-halving studies.
pub fn adjoint_residual(traj: &TrajectoryRecord, oracle: &dyn Objective) -> f64 {
    traj.samples
        .iter()
        .map(|s| (&s.state.lambda_x + oracle.gradient(&s.state.x)).norm())
        .fold(0.0, f64::max)
}

/// `max_t ‖λ_v(t)‖` for primal-dual trajectories.
pub fn check_singular_arc(traj: &TrajectoryRecord, tol: f64) -> VerificationReport {
    const NAME: &str = "singular_arc";
    if traj.meta.mode == Mode::Reduced {
        return VerificationReport::from_checks(vec![Check::not_applicable(
            NAME,
            "reduced mode: λ_v is not integrated",
        )]);
    }
    let mut worst = Worst::default();
    for (i, s) in traj.samples.iter().enumerate() {
        worst.offer(s.state.lambda_v.norm(), i, s.state.t);
    }
    VerificationReport::from_checks(vec![Check::bounded(NAME, worst.0, tol, false)])
}

/// Final `‖∇E‖ ≤ tol_g` and `‖v‖ ≤ tol_v` of a flow.
pub fn check_stationarity(
    traj: &TrajectoryRecord,
    oracle: &dyn Objective,
    rule: &StoppingRule,
) -> Result<VerificationReport> {
    let Some(last) = traj.samples.last() else {
        return Ok(VerificationReport::from_checks(vec![Check::not_applicable(
            "stationarity_gradient",
            "empty trajectory",
        )]));
    };
    check_dim("final state", oracle.dim(), last.state.x.len())?;
    let i = traj.samples.len() - 1;
    let loc = Location { index: i, t: last.state.t };
    let g = oracle.gradient(&last.state.x).norm();
    let mut grad = Check::bounded("stationarity_gradient", Some((g, loc)), rule.tol_g, false);
    let mut vel = Check::bounded("stationarity_velocity", Some((last.state.v.norm(), loc)), rule.tol_v, false);
    if traj.diverged() {
        grad = grad.failed("diverged");
        vel = vel.failed("diverged");
    }
    Ok(VerificationReport::from_checks(vec![grad, vel]))
}

/// Final `‖∇E‖ ≤ tol_g` of a discrete sequence.
pub fn check_sequence_stationarity(
    seq: &IterateSequence,
    oracle: &dyn Objective,
    tol_g: f64,
) -> Result<VerificationReport> {
    let x = seq.last();
    check_dim("final iterate", oracle.dim(), x.len())?;
    let k = seq.points.len() - 1;
    let loc = Location { index: k, t: k as f64 };
    let mut c = Check::bounded("stationarity_gradient", Some((oracle.gradient(x).norm(), loc)), tol_g, false);
    if seq.stop == IterStop::Diverged {
        c = c.failed("diverged");
    }
    Ok(VerificationReport::from_checks(vec![c]))
}
