//! Quadratic control Lyapunov function over the auxiliary state `(λ_x, v)`:
//!
//! ```text
//! V(λ, v) = (a/2) λᵀλ + (b/2) vᵀv + c λᵀv,   a > 0, b > 0, c ≠ 0, ab - c² > 0
//! ```
//!
//! The auxiliary dynamics are `λ̇ = -∇²E(x) v`, `v̇ = u`, so the Lie derivative
//! along them is `-(aλ + cv)ᵀ ∇²E(x) v + (cλ + bv)ᵀ u`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objective::Objective;

/// Coefficients of the quadratic CLF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClfParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Additionally require `c < 0`, which the drift condition needs when the
    /// Hessian is positive definite.
    #[serde(default)]
    pub pd_hessian_mode: bool,
}

impl Default for ClfParams {
    fn default() -> Self {
        ClfParams {
            a: 2.0,
            b: 1.0,
            c: -1.0,
            pd_hessian_mode: true,
        }
    }
}

impl ClfParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let p = ClfParams {
            a,
            b,
            c,
            pd_hessian_mode: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_pd_hessian_mode(mut self) -> Result<Self> {
        self.pd_hessian_mode = true;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ClfParams { a, b, c, .. } = *self;
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::invalid("clf", "coefficients must be finite"));
        }
        if !(a > 0.0) {
            return Err(Error::invalid("clf.a", format!("must be > 0, got {a}")));
        }
        if !(b > 0.0) {
            return Err(Error::invalid("clf.b", format!("must be > 0, got {b}")));
        }
        if c == 0.0 {
            return Err(Error::invalid("clf.c", "must be non-zero"));
        }
        if !(a * b - c * c > 0.0) {
            return Err(Error::invalid(
                "clf",
                format!("ab - c² = {} must be > 0", a * b - c * c),
            ));
        }
        if self.pd_hessian_mode && c >= 0.0 {
            return Err(Error::invalid("clf.c", format!("pd_hessian_mode requires c < 0, got {c}")));
        }
        Ok(())
    }

    pub fn value(&self, lambda_x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        check_dim("clf velocity", lambda_x.len(), v.len())?;
        Ok(0.5 * self.a * lambda_x.norm_squared()
            + 0.5 * self.b * v.norm_squared()
            + self.c * lambda_x.dot(v))
    }

    /// `∂V/∂λ = aλ + cv`.
    pub fn grad_lambda(&self, lambda_x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("clf velocity", lambda_x.len(), v.len())?;
        Ok(lambda_x * self.a + v * self.c)
    }

    /// `∂V/∂v = cλ + bv`.
    pub fn grad_v(&self, lambda_x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("clf velocity", lambda_x.len(), v.len())?;
        Ok(lambda_x * self.c + v * self.b)
    }

    /// The `u`-independent part of the Lie derivative, `-(aλ + cv)ᵀ ∇²E(x) v`.
    pub fn drift_contribution(
        &self,
        oracle: &dyn Objective,
        x: &DVector<f64>,
        lambda_x: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<f64> {
        Ok(-drift_term(self, oracle, x, lambda_x, v)?)
    }

    pub fn lie_derivative(
        &self,
        oracle: &dyn Objective,
        x: &DVector<f64>,
        lambda_x: &DVector<f64>,
        v: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<f64> {
        check_dim("control", v.len(), u.len())?;
        let drift = self.drift_contribution(oracle, x, lambda_x, v)?;
        Ok(drift + self.grad_v(lambda_x, v)?.dot(u))
    }
}

/// Scale-aware zero test for `∂V/∂v`: `ε_v = 1e-10 (1 + ‖λ‖ + ‖v‖)`.
pub fn grad_v_threshold(lambda_x: &DVector<f64>, v: &DVector<f64>) -> f64 {
    1e-10 * (1.0 + lambda_x.norm() + v.norm())
}

fn drift_term(
    p: &ClfParams,
    oracle: &dyn Objective,
    x: &DVector<f64>,
    lambda_x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    let n = oracle.dim();
    check_dim("state x", n, x.len())?;
    check_dim("adjoint λ_x", n, lambda_x.len())?;
    check_dim("velocity v", n, v.len())?;
    let hv = oracle.hessian(x) * v;
    Ok(p.grad_lambda(lambda_x, v)?.dot(&hv))
}

/// Outcome of the drift condition test at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DriftReport {
    /// The state lies on `∂V/∂v = 0`, `(λ, v) ≠ 0`; `holds` iff
    /// `(aλ + cv)ᵀ ∇²E v > 0`.
    Applicable { holds: bool, drift_term: f64 },
    /// Off the `∂V/∂v = 0` set, or at the excluded origin.
    NotApplicable,
}

impl DriftReport {
    pub fn holds(&self) -> Option<bool> {
        match self {
            DriftReport::Applicable { holds, .. } => Some(*holds),
            DriftReport::NotApplicable => None,
        }
    }
}

pub fn drift_condition_check(
    p: &ClfParams,
    oracle: &dyn Objective,
    x: &DVector<f64>,
    lambda_x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DriftReport> {
    let dv = p.grad_v(lambda_x, v)?;
    if lambda_x.norm() == 0.0 && v.norm() == 0.0 {
        return Ok(DriftReport::NotApplicable);
    }
    if dv.norm() > grad_v_threshold(lambda_x, v) {
        return Ok(DriftReport::NotApplicable);
    }
    let drift_term = drift_term(p, oracle, x, lambda_x, v)?;
    Ok(DriftReport::Applicable {
        holds: drift_term > 0.0,
        drift_term,
    })
}
