//! Singular feedback laws for the double integrator `ẍ = u`.
//!
//! All laws act on the auxiliary state `(λ_x, v)`. On the singular arc the
//! adjoint is `λ_x = -∇E(x)`, and the flow module substitutes exactly that.
//!
//! * [`ControlLaw::MinP`] minimizes the Lie derivative of `V` over the
//!   ellipsoid `uᵀWu ≤ Δ`, giving `u = -σ W⁻¹ ∂_vV` with
//!   `σ² = Δ / (∂_vVᵀ W⁻¹ ∂_vV)`.
//! * [`ControlLaw::MinPStar`] minimizes `½ uᵀWu` subject to
//!   `L_β V + ρ ≤ 0`, `ρ = η V`, solved in closed form from its KKT system.
//! * [`ControlLaw::Direct`] is the linear law `u = K_a λ + K_b v + K_c ∇²E v`
//!   that cancels the drift for suitably matched gains.
//! * [`ControlLaw::Generalized`] fixes the multiplier, `u = -σ_q W⁻¹ ∂_vV`;
//!   with `λ = -∇E` this is `ẍ = -W⁻¹(γ_a ∇E + γ_b ẋ)` with constant gains.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clf::{drift_condition_check, grad_v_threshold, ClfParams, DriftReport};
use crate::error::{check_dim, Error, Result};
use crate::metric::{metric_matrix, metric_solve, MetricKind, MetricSpec};
use crate::objective::Objective;

/// Gains of the direct construction, `K_a = γ_a`, `K_b = -γ_b`, `K_c = -γ_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectGains {
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub gamma_c: f64,
}

impl DirectGains {
    /// The unique gains matching `clf` for a chosen velocity gain `γ_b`:
    /// `K_a = c K_b / b` and `K_c = a / c`.
    pub fn matched(clf: &ClfParams, gamma_b: f64) -> Self {
        DirectGains {
            gamma_a: -clf.c * gamma_b / clf.b,
            gamma_b,
            gamma_c: -clf.a / clf.c,
        }
    }

    pub fn k_a(&self) -> f64 {
        self.gamma_a
    }

    pub fn k_b(&self) -> f64 {
        -self.gamma_b
    }

    pub fn k_c(&self) -> f64 {
        -self.gamma_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ControlLaw {
    MinP {
        #[serde(default = "one")]
        delta: f64,
        /// Use `Δ = min(delta, ‖∂_vV‖²)` so the control fades near equilibrium.
        #[serde(default)]
        taper: bool,
    },
    MinPStar {
        #[serde(default = "one")]
        rate_eta: f64,
    },
    Direct(DirectGains),
    Generalized {
        sigma_q: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ControlLaw {
    pub fn family(&self) -> &'static str {
        match self {
            ControlLaw::MinP { .. } => "min_p",
            ControlLaw::MinPStar { .. } => "min_p_star",
            ControlLaw::Direct(_) => "direct",
            ControlLaw::Generalized { .. } => "generalized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    #[serde(default)]
    pub clf: ClfParams,
    #[serde(default)]
    pub metric: MetricSpec,
    pub law: ControlLaw,
}

impl ControllerSpec {
    pub fn new(clf: ClfParams, metric: MetricSpec, law: ControlLaw) -> Result<Self> {
        let spec = ControllerSpec { clf, metric, law };
        spec.validate()?;
        Ok(spec)
    }

    /// Structural checks plus, for the direct law, the gain conditions that
    /// make the Lie derivative negative definite.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        if let ControlLaw::Direct(g) = self.law {
            let report = validate_direct_gains(&self.clf, g.gamma_a, g.gamma_b, g.gamma_c);
            if !report.holds {
                return Err(Error::invalid(
                    "gains",
                    format!("direct gains violate {:?}", report.violated),
                ));
            }
        }
        Ok(())
    }

    /// Parameter ranges only; direct gains are not matched against the CLF.
    pub fn validate_structure(&self) -> Result<()> {
        self.clf.validate()?;
        if self.metric.kind != MetricKind::Euclidean {
            self.metric.validate()?;
        }
        match self.law {
            ControlLaw::MinP { delta, .. } => {
                if !(delta > 0.0 && delta.is_finite()) {
                    return Err(Error::invalid("delta", format!("must be finite and > 0, got {delta}")));
                }
            }
            ControlLaw::MinPStar { rate_eta } => {
                if !(rate_eta > 0.0 && rate_eta.is_finite()) {
                    return Err(Error::invalid(
                        "rate_eta",
                        format!("must be finite and > 0, got {rate_eta}"),
                    ));
                }
            }
            ControlLaw::Direct(g) => {
                if ![g.gamma_a, g.gamma_b, g.gamma_c].iter().all(|x| x.is_finite()) {
                    return Err(Error::invalid("gains", "must be finite"));
                }
            }
            ControlLaw::Generalized { sigma_q } => {
                gains_from_sigma(&self.clf, sigma_q)?;
            }
        }
        Ok(())
    }
}

/// A synthesized control together with the multiplier that produced it
/// (`σ`, `σ*` or `σ_q`); `None` for the direct law.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub u: DVector<f64>,
    pub multiplier: Option<f64>,
}

impl Control {
    fn zero(n: usize) -> Self {
        Control {
            u: DVector::zeros(n),
            multiplier: Some(0.0),
        }
    }
}

fn check_state(
    oracle: &dyn Objective,
    x: &DVector<f64>,
    lambda_x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<()> {
    let n = oracle.dim();
    check_dim("state x", n, x.len())?;
    check_dim("adjoint λ_x", n, lambda_x.len())?;
    check_dim("velocity v", n, v.len())
}

/// Evaluate whichever law `spec` selects.
pub fn synthesize(
    spec: &ControllerSpec,
    oracle: &dyn Objective,
    x: &DVector<f64>,
    lambda_x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<Control> {
    check_state(oracle, x, lambda_x, v)?;
    match spec.law {
        ControlLaw::MinP { delta, taper } => {
            let dv = spec.clf.grad_v(lambda_x, v)?;
            let delta = if taper { delta.min(dv.norm_squared()) } else { delta };
            let w = metric_matrix(&spec.metric, oracle, x)?;
            min_p_with_metric(&spec.clf, &w, lambda_x, v, delta)
        }
        ControlLaw::MinPStar { rate_eta } => {
            let rho = rate_eta * spec.clf.value(lambda_x, v)?;
            let w = metric_matrix(&spec.metric, oracle, x)?;
            min_p_star_with_rate(&spec.clf, oracle, x, &w, lambda_x, v, rho)
        }
        ControlLaw::Direct(g) => Ok(Control {
            u: direct_law(oracle, x, lambda_x, v, &g),
            multiplier: None,
        }),
        ControlLaw::Generalized { sigma_q } => {
            let w = metric_matrix(&spec.metric, oracle, x)?;
            let dv = spec.clf.grad_v(lambda_x, v)?;
            let u = metric_solve(&w, &dv)? * -sigma_q;
            Ok(Control {
                u,
                multiplier: Some(sigma_q),
            })
        }
    }
}

fn expect_family(spec: &ControllerSpec, family: &'static str) -> Result<()> {
    if spec.law.family() == family {
        Ok(())
    } else {
        Err(Error::invalid(
            "law",
            format!("expected the {family} family, got {}", spec.law.family()),
        ))
    }
}

pub fn control_min_p(
    spec: &ControllerSpec,
    oracle: &dyn Objective,
    x: &DVector<f64>,
    lambda_x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    expect_family(spec, "min_p")?;
    Ok(synthesize(spec, oracle, x, lambda_x, v)?.u)
}

pub fn control_min_p_star(
    spec: &ControllerSpec,
    oracle: &dyn Objective,
    x: &DVector<f64>,
    lambda_x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    expect_family(spec, "min_p_star")?;
    Ok(synthesize(spec, oracle, x, lambda_x, v)?.u)
}

pub fn control_direct(
    spec: &ControllerSpec,
    oracle: &dyn Objective,
    x: &DVector<f64>,
    lambda_x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    expect_family(spec, "direct")?;
    Ok(synthesize(spec, oracle, x, lambda_x, v)?.u)
}

/// Minimum Principle (P) for a given metric: `u = -σ W⁻¹ ∂_vV`, or `u = 0`
/// when `∂_vV` vanishes.
pub fn min_p_with_metric(
    clf: &ClfParams,
    w: &DMatrix<f64>,
    lambda_x: &DVector<f64>,
    v: &DVector<f64>,
    delta: f64,
) -> Result<Control> {
    let dv = clf.grad_v(lambda_x, v)?;
    if dv.norm() <= grad_v_threshold(lambda_x, v) {
        return Ok(Control::zero(v.len()));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", format!("must be > 0, got {delta}")));
    }
    let w_inv_dv = metric_solve(w, &dv)?;
    // normalize by sᵀWs rather than ∂_vVᵀs so the budget holds for the
    // returned control even when W is badly conditioned
    let sigma = (delta / w_inv_dv.dot(&(w * &w_inv_dv))).sqrt();
    Ok(Control {
        u: w_inv_dv * -sigma,
        multiplier: Some(sigma),
    })
}

/// Minimum Principle (P*) with `D = ½ uᵀWu` and an explicit rate `ρ`.
///
/// With `d = -(aλ + cv)ᵀ ∇²E v` the constraint reads `d + ∂_vVᵀu + ρ ≤ 0`.
/// If `d + ρ ≤ 0` the minimal-norm control is zero; otherwise the constraint
/// is active and `σ* = (ρ + d) / (∂_vVᵀ W⁻¹ ∂_vV)`.
pub fn min_p_star_with_rate(
    clf: &ClfParams,
    oracle: &dyn Objective,
    x: &DVector<f64>,
    w: &DMatrix<f64>,
    lambda_x: &DVector<f64>,
    v: &DVector<f64>,
    rho: f64,
) -> Result<Control> {
    let drift = clf.drift_contribution(oracle, x, lambda_x, v)?;
    let slack = drift + rho;
    if slack <= 0.0 {
        return Ok(Control::zero(v.len()));
    }
    let dv = clf.grad_v(lambda_x, v)?;
    if dv.norm() <= grad_v_threshold(lambda_x, v) {
        let drift_term = match drift_condition_check(clf, oracle, x, lambda_x, v)? {
            DriftReport::Applicable { drift_term, .. } => drift_term,
            DriftReport::NotApplicable => -drift,
        };
        return Err(Error::Infeasible {
            drift_term,
            rate: rho,
        });
    }
    let w_inv_dv = metric_solve(w, &dv)?;
    let sigma = slack / dv.dot(&w_inv_dv);
    Ok(Control {
        u: w_inv_dv * -sigma,
        multiplier: Some(sigma),
    })
}

/// `u = γ_a λ - γ_b v - γ_c ∇²E(x) v`.
pub fn direct_law(
    oracle: &dyn Objective,
    x: &DVector<f64>,
    lambda_x: &DVector<f64>,
    v: &DVector<f64>,
    gains: &DirectGains,
) -> DVector<f64> {
    let hv = oracle.hessian(x) * v;
    lambda_x * gains.k_a() + v * gains.k_b() + hv * gains.k_c()
}

/// Conditions under which the direct law makes `L_β V` negative definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainCondition {
    /// The CLF cross coefficient must satisfy `c < 0`.
    NegativeCrossTerm,
    KaPositive,
    KbNegative,
    /// `b K_a = c K_b`.
    Balance,
    /// `K_c = a / c`.
    HessianGain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainReport {
    pub holds: bool,
    pub violated: Vec<GainCondition>,
}

pub fn validate_direct_gains(
    clf: &ClfParams,
    gamma_a: f64,
    gamma_b: f64,
    gamma_c: f64,
) -> GainReport {
    let (k_a, k_b, k_c) = (gamma_a, -gamma_b, -gamma_c);
    let close = |lhs: f64, rhs: f64| (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0);
    let mut violated = Vec::new();
    if !(clf.c < 0.0) {
        violated.push(GainCondition::NegativeCrossTerm);
    }
    if !(k_a > 0.0) {
        violated.push(GainCondition::KaPositive);
    }
    if !(k_b < 0.0) {
        violated.push(GainCondition::KbNegative);
    }
    if !close(clf.b * k_a, clf.c * k_b) {
        violated.push(GainCondition::Balance);
    }
    if !close(k_c, clf.a / clf.c) {
        violated.push(GainCondition::HessianGain);
    }
    GainReport {
        holds: violated.is_empty(),
        violated,
    }
}

/// Gains `(γ_a, γ_b) = (-c σ_q, b σ_q)` of the closed loop
/// `ẍ = -W⁻¹(γ_a ∇E + γ_b ẋ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackGains {
    pub gamma_a: f64,
    pub gamma_b: f64,
}

impl FeedbackGains {
    /// False when `c > 0` makes `γ_a` negative.
    pub fn nonnegative(&self) -> bool {
        self.gamma_a >= 0.0 && self.gamma_b >= 0.0
    }
}

pub fn gains_from_sigma(clf: &ClfParams, sigma_q: f64) -> Result<FeedbackGains> {
    if !(sigma_q > 0.0 && sigma_q.is_finite()) {
        return Err(Error::invalid("sigma_q", format!("must be finite and > 0, got {sigma_q}")));
    }
    Ok(FeedbackGains {
        gamma_a: -clf.c * sigma_q,
        gamma_b: clf.b * sigma_q,
    })
}
