//! Metric tensors `W` for the control set `{u : uᵀ W u ≤ Δ}`.
//!
//! Three choices are supported: the identity (heavy-ball flows), the
//! Hessian of the objective (accelerated Newton) and a damped BFGS
//! approximation `B` of the Hessian (accelerated quasi-Newton). Whatever the
//! kind, the materialized matrix is symmetric with smallest eigenvalue at
//! least `eig_floor`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objective::{symmetrize, Objective};

pub const DEFAULT_EIG_FLOOR: f64 = 1e-6;

/// Curvature pairs with `sᵀy < CURVATURE_SKIP ‖s‖‖y‖` are ignored.
pub const CURVATURE_SKIP: f64 = 1e-10;

/// Powell damping kicks in when `sᵀy < POWELL_DAMPING sᵀBs`.
const POWELL_DAMPING: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    Hessian,
    QuasiNewton,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Euclidean => "euclidean",
            MetricKind::Hessian => "hessian",
            MetricKind::QuasiNewton => "quasi_newton",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_eig_floor() -> f64 {
    DEFAULT_EIG_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    #[serde(default = "default_eig_floor")]
    pub eig_floor: f64,
    /// Current approximation `B`; `None` means the identity.
    #[serde(skip)]
    pub qn_state: Option<DMatrix<f64>>,
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec::euclidean()
    }
}

impl MetricSpec {
    pub fn euclidean() -> Self {
        MetricSpec {
            kind: MetricKind::Euclidean,
            eig_floor: DEFAULT_EIG_FLOOR,
            qn_state: None,
        }
    }

    pub fn hessian() -> Self {
        MetricSpec {
            kind: MetricKind::Hessian,
            ..MetricSpec::euclidean()
        }
    }

    pub fn quasi_newton() -> Self {
        MetricSpec {
            kind: MetricKind::QuasiNewton,
            ..MetricSpec::euclidean()
        }
    }

    pub fn with_eig_floor(mut self, eig_floor: f64) -> Self {
        self.eig_floor = eig_floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eig_floor > 0.0) || !self.eig_floor.is_finite() {
            return Err(Error::invalid(
                "metric.eig_floor",
                format!("must be finite and > 0, got {}", self.eig_floor),
            ));
        }
        Ok(())
    }

    /// Materialize `W` at `x`.
    pub fn matrix(&self, oracle: &dyn Objective, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        metric_matrix(self, oracle, x)
    }
}

pub fn metric_matrix(
    spec: &MetricSpec,
    oracle: &dyn Objective,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = oracle.dim();
    check_dim("metric point", n, x.len())?;
    match spec.kind {
        MetricKind::Euclidean => Ok(DMatrix::identity(n, n)),
        MetricKind::Hessian => {
            spec.validate()?;
            let h = oracle.hessian(x);
            if !h.iter().all(|e| e.is_finite()) {
                return Err(Error::NotPositiveDefinite("Hessian has non-finite entries".into()));
            }
            Ok(floor_spectrum(symmetrize(h), spec.eig_floor))
        }
        MetricKind::QuasiNewton => {
            spec.validate()?;
            match &spec.qn_state {
                Some(b) => {
                    check_dim("quasi-Newton state", n, b.nrows())?;
                    Ok(b.clone())
                }
                None => Ok(DMatrix::identity(n, n)),
            }
        }
    }
}

/// Shift `m` by `τI` so that its smallest eigenvalue reaches `floor`.
pub fn floor_spectrum(m: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let mut min = eig.min();
    if min >= floor {
        return m;
    }
    // eigenvalues of the shifted matrix carry O(n ε ‖m‖) error, so top up
    // with growing headroom until the computed minimum clears the floor
    let mut slack = 8.0 * f64::EPSILON * eig.amax().max(floor);
    let mut shifted = m;
    for _ in 0..8 {
        shifted += DMatrix::identity(n, n) * (floor - min + slack);
        min = shifted.clone().symmetric_eigen().eigenvalues.min();
        if min >= floor {
            break;
        }
        slack *= 4.0;
    }
    shifted
}

/// Solve `W s = rhs` by Cholesky with one step of iterative refinement.
pub fn metric_solve(w: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("metric rhs", w.nrows(), rhs.len())?;
    check_dim("metric columns", w.nrows(), w.ncols())?;
    let chol = w.clone().cholesky().ok_or_else(|| {
        Error::NotPositiveDefinite("Cholesky factorization of the metric failed".into())
    })?;
    let mut s = chol.solve(rhs);
    let residual = rhs - w * &s;
    s += chol.solve(&residual);
    Ok(s)
}

/// Damped BFGS update of `B` from the displacement `s` and gradient change
/// `g_delta`. Pairs with too little curvature leave `B` unchanged.
pub fn quasi_newton_update(
    spec: &MetricSpec,
    s: &DVector<f64>,
    g_delta: &DVector<f64>,
) -> Result<MetricSpec> {
    if spec.kind != MetricKind::QuasiNewton {
        return Err(Error::WrongMetricKind {
            operation: "quasi_newton_update",
            found: spec.kind.name(),
        });
    }
    check_dim("secant pair", s.len(), g_delta.len())?;
    let n = s.len();
    let b = match &spec.qn_state {
        Some(b) => {
            check_dim("quasi-Newton state", n, b.nrows())?;
            b.clone()
        }
        None => DMatrix::identity(n, n),
    };

    let sy = s.dot(g_delta);
    if !(sy >= CURVATURE_SKIP * s.norm() * g_delta.norm()) || sy <= 0.0 {
        return Ok(spec.clone());
    }
    let bs = &b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) {
        return Ok(spec.clone());
    }
    let r = if sy < POWELL_DAMPING * sbs {
        let theta = (1.0 - POWELL_DAMPING) * sbs / (sbs - sy);
        g_delta * theta + &bs * (1.0 - theta)
    } else {
        g_delta.clone()
    };
    let sr = s.dot(&r);
    let updated = &b - &bs * bs.transpose() / sbs + &r * r.transpose() / sr;
    let updated = floor_spectrum(symmetrize(updated), spec.eig_floor);

    Ok(MetricSpec {
        qn_state: Some(updated),
        ..spec.clone()
    })
}
