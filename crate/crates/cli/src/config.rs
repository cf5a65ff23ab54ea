//! TOML run configuration: parsing, defaults, validation and the resolved echo.

use std::fmt;

use accelflow::clf::ClfParams;
use accelflow::control::DirectGains;
use accelflow::discrete::Schedule;
use accelflow::flow::{Integrator, Mode};
use accelflow::metric::{MetricKind, MetricSpec};
use accelflow::verify::DissipationMode;
use serde::{Deserialize, Serialize};

/// A config problem pinned to a line of the source file where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    /// Dotted path such as `method.flow.h`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: field `{}`: {}", self.field, self.message),
            None => write!(f, "field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemConfig,
    pub method: MethodConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemName {
    Quadratic,
    Rosenbrock,
    LogSumExp,
}

/// Problem block. Which parameters apply depends on `name`:
/// `quadratic` takes `dim`, `condition`, `x_star`; `log_sum_exp` takes
/// `dim`, `terms`, `scale`; all take `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: ProblemName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

/// Exactly one of `flow` or `discrete`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscreteConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MinP,
    MinPStar,
    Direct,
    Generalized,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::MinP => "min_p",
            Family::MinPStar => "min_p_star",
            Family::Direct => "direct",
            Family::Generalized => "generalized",
        }
    }
}

fn default_h() -> f64 {
    1e-3
}
fn default_t_max() -> f64 {
    1e3
}
fn default_tol() -> f64 {
    1e-6
}
fn default_qn_interval() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub family: Family,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_tol")]
    pub tol_g: f64,
    #[serde(default = "default_tol")]
    pub tol_v: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_qn_interval")]
    pub qn_interval: usize,
    /// min_p budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taper: Option<bool>,
    /// min_p_star rate `ρ = η V`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_eta: Option<f64>,
    /// generalized family multiplier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_q: Option<f64>,
    /// direct law: velocity gain, the other gains are matched to the CLF.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_b: Option<f64>,
    /// direct law: explicit gains, used instead of `gamma_b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<DirectGains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
    #[serde(default)]
    pub clf: ClfParams,
    #[serde(default)]
    pub metric: MetricSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscreteMethod {
    HeavyBall,
    Nesterov1,
    Nesterov2,
    Cg,
    AccelNewton,
    AccelQn,
}

impl DiscreteMethod {
    pub fn name(self) -> &'static str {
        match self {
            DiscreteMethod::HeavyBall => "heavy_ball",
            DiscreteMethod::Nesterov1 => "nesterov1",
            DiscreteMethod::Nesterov2 => "nesterov2",
            DiscreteMethod::Cg => "cg",
            DiscreteMethod::AccelNewton => "accel_newton",
            DiscreteMethod::AccelQn => "accel_qn",
        }
    }

    fn allowed(self) -> &'static [&'static str] {
        match self {
            DiscreteMethod::HeavyBall | DiscreteMethod::Nesterov2 => &["alpha", "beta"],
            DiscreteMethod::Nesterov1 => &["alpha", "beta", "gamma"],
            DiscreteMethod::Cg => &["alpha", "beta_cg"],
            DiscreteMethod::AccelNewton => &["gamma_a", "gamma_b", "h", "eig_floor", "metric", "v0"],
            DiscreteMethod::AccelQn => &["gamma_a", "gamma_b", "h", "eig_floor", "v0"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgRuleName {
    FletcherReeves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaCgConfig {
    Rule(CgRuleName),
    Given(Schedule),
}

fn default_max_iters() -> usize {
    1000
}

/// Discrete method block. Omitting `alpha` for `cg` selects the exact line
/// search; `gamma` for `nesterov1` defaults to `alpha * beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteConfig {
    pub name: DiscreteMethod,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_cg: Option<BetaCgConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eig_floor: Option<f64>,
    /// accel_newton only: metric kind, Hessian by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
}

impl DiscreteConfig {
    fn present(&self) -> Vec<&'static str> {
        let mut p = Vec::new();
        let fields: [(&'static str, bool); 10] = [
            ("alpha", self.alpha.is_some()),
            ("beta", self.beta.is_some()),
            ("gamma", self.gamma.is_some()),
            ("beta_cg", self.beta_cg.is_some()),
            ("gamma_a", self.gamma_a.is_some()),
            ("gamma_b", self.gamma_b.is_some()),
            ("h", self.h.is_some()),
            ("eig_floor", self.eig_floor.is_some()),
            ("metric", self.metric.is_some()),
            ("v0", self.v0.is_some()),
        ];
        for (name, set) in fields {
            if set {
                p.push(name);
            }
        }
        p
    }
}

fn default_out_dir() -> String {
    "out".into()
}
fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    /// File stem; defaults to a slug of the method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
            name: None,
            stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Dissipation,
    AdjointConsistency,
    SingularArc,
    Stationarity,
}

fn default_check_tol() -> f64 {
    1e-9
}
fn default_order_constant() -> f64 {
    1.0
}
fn default_order_floor() -> f64 {
    1e-10
}
fn default_arc_tol() -> f64 {
    accelflow::verify::SINGULAR_ARC_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub checks: Vec<CheckName>,
    /// Dissipation tolerance.
    #[serde(default = "default_check_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissipation: Option<DissipationMode>,
    #[serde(default = "default_order_constant")]
    pub order_constant: f64,
    #[serde(default = "default_order_floor")]
    pub order_floor: f64,
    #[serde(default = "default_arc_tol")]
    pub singular_arc_tol: f64,
}

impl RunConfig {
    pub fn is_flow(&self) -> bool {
        self.method.flow.is_some()
    }

    /// Human-readable method slug, e.g. `direct_euclidean` or `heavy_ball`.
    pub fn method_slug(&self) -> String {
        match (&self.method.flow, &self.method.discrete) {
            (Some(f), _) => format!("{}_{}", f.family.name(), f.metric.kind.name()),
            (None, Some(d)) => d.name.name().to_string(),
            (None, None) => "unknown".into(),
        }
    }

    pub fn output_name(&self) -> String {
        self.output.name.clone().unwrap_or_else(|| self.method_slug())
    }

    /// Fill every default so the echo fully determines the run.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        let p = &mut c.problem;
        match p.name {
            ProblemName::Quadratic => {
                let n = *p.dim.get_or_insert(10);
                p.condition.get_or_insert(100.0);
                p.x_star.get_or_insert_with(|| vec![0.0; n]);
                p.x0.get_or_insert_with(|| vec![1.0; n]);
            }
            ProblemName::Rosenbrock => {
                p.x0.get_or_insert_with(|| vec![-1.2, 1.0]);
            }
            ProblemName::LogSumExp => {
                let n = *p.dim.get_or_insert(4);
                p.terms.get_or_insert(6);
                p.scale.get_or_insert(1.0);
                p.x0.get_or_insert_with(|| vec![1.0; n]);
            }
        }
        let n = c.problem.x0.as_ref().map_or(0, Vec::len);
        if let Some(f) = &mut c.method.flow {
            f.v0.get_or_insert_with(|| vec![0.0; n]);
            match f.family {
                Family::MinP => {
                    f.delta.get_or_insert(1.0);
                    f.taper.get_or_insert(false);
                }
                Family::MinPStar => {
                    f.rate_eta.get_or_insert(1.0);
                }
                Family::Direct => {
                    if f.gains.is_none() {
                        let gb = *f.gamma_b.get_or_insert(1.0);
                        f.gains = Some(DirectGains::matched(&f.clf, gb));
                    }
                    f.gamma_b = None;
                }
                Family::Generalized => {}
            }
        }
        if let Some(d) = &mut c.method.discrete {
            match d.name {
                DiscreteMethod::Nesterov1 => {
                    if d.gamma.is_none() {
                        if let (Some(a), Some(b)) = (&d.alpha, &d.beta) {
                            d.gamma = product(a, b, d.max_iters);
                        }
                    }
                }
                DiscreteMethod::Cg => {
                    d.beta_cg.get_or_insert(BetaCgConfig::Rule(CgRuleName::FletcherReeves));
                }
                DiscreteMethod::AccelNewton => {
                    d.metric.get_or_insert(MetricKind::Hessian);
                    d.eig_floor.get_or_insert(accelflow::metric::DEFAULT_EIG_FLOOR);
                    d.v0.get_or_insert_with(|| vec![0.0; n]);
                }
                DiscreteMethod::AccelQn => {
                    d.eig_floor.get_or_insert(accelflow::metric::DEFAULT_EIG_FLOOR);
                    d.v0.get_or_insert_with(|| vec![0.0; n]);
                }
                _ => {}
            }
        }
        if c.verify.is_none() {
            c.verify = Some(default_verify(&c));
        }
        if let (Some(v), Some(f)) = (&mut c.verify, &c.method.flow) {
            if v.checks.contains(&CheckName::Dissipation) && v.dissipation.is_none() {
                v.dissipation = Some(match f.family {
                    Family::MinPStar => DissipationMode::Rate { eta: f.rate_eta.unwrap_or(1.0) },
                    _ => DissipationMode::Strict,
                });
            }
        }
        c
    }
}

fn product(a: &Schedule, b: &Schedule, len: usize) -> Option<Schedule> {
    match (a, b) {
        (Schedule::Constant(x), Schedule::Constant(y)) => Some(Schedule::Constant(x * y)),
        _ => {
            let v: Option<Vec<f64>> = (0..len)
                .map(|k| Some(a.at(k, "alpha").ok()? * b.at(k, "beta").ok()?))
                .collect();
            v.map(Schedule::Values)
        }
    }
}

fn default_verify(c: &RunConfig) -> VerifyConfig {
    let checks = match &c.method.flow {
        Some(f) if f.mode == Mode::FullPrimalDual => vec![
            CheckName::Dissipation,
            CheckName::AdjointConsistency,
            CheckName::SingularArc,
            CheckName::Stationarity,
        ],
        Some(_) => vec![CheckName::Dissipation, CheckName::Stationarity],
        None => vec![CheckName::Stationarity],
    };
    VerifyConfig {
        checks,
        tol: default_check_tol(),
        dissipation: None,
        order_constant: default_order_constant(),
        order_floor: default_order_floor(),
        singular_arc_tol: default_arc_tol(),
    }
}

/// Parse, validate and resolve a config file's contents.
pub fn parse(source: &str) -> Result<RunConfig, ConfigError> {
    let raw: RunConfig = toml::from_str(source).map_err(|e| from_toml(source, &e))?;
    let resolved = raw.resolved();
    validate(&resolved).map_err(|(field, message)| ConfigError {
        line: locate(source, &field),
        field,
        message,
    })?;
    Ok(resolved)
}

pub fn to_toml(c: &RunConfig) -> String {
    toml::to_string(c).expect("run configs always serialize")
}

fn from_toml(source: &str, e: &toml::de::Error) -> ConfigError {
    let message = e.message().trim().to_string();
    let Some(span) = e.span() else {
        return ConfigError { line: None, field: "<root>".into(), message };
    };
    let line = source[..span.start.min(source.len())].matches('\n').count() + 1;
    let field = field_at(source, line).unwrap_or_else(|| "<root>".into());
    ConfigError { line: Some(line), field, message }
}

/// Dotted path of the key defined on `line`, or the table header there.
fn field_at(source: &str, line: usize) -> Option<String> {
    let mut table = String::new();
    for (i, l) in source.lines().enumerate() {
        let t = l.trim();
        if let Some(h) = header(t) {
            table = h;
            if i + 1 == line {
                return Some(table);
            }
            continue;
        }
        if i + 1 == line {
            let key = t.split('=').next()?.trim().trim_matches('"');
            if key.is_empty() {
                return Some(table);
            }
            return Some(if table.is_empty() { key.to_string() } else { format!("{table}.{key}") });
        }
    }
    None
}

fn header(t: &str) -> Option<String> {
    let inner = t.strip_prefix('[')?.split(']').next()?;
    Some(inner.trim_start_matches('[').trim().to_string())
}

/// Line of `path` in the source, falling back to the closest enclosing table.
pub fn locate(source: &str, path: &str) -> Option<usize> {
    let mut parts: Vec<&str> = path.split('.').collect();
    while !parts.is_empty() {
        let (table, key) = (parts[..parts.len() - 1].join("."), parts[parts.len() - 1]);
        let mut current = String::new();
        for (i, l) in source.lines().enumerate() {
            let t = l.trim();
            if let Some(h) = header(t) {
                current = h;
                if current == parts.join(".") {
                    return Some(i + 1);
                }
                continue;
            }
            if current == table {
                if let Some(k) = t.split('=').next() {
                    if k.trim().trim_matches('"') == key && t.contains('=') {
                        return Some(i + 1);
                    }
                }
            }
        }
        parts.pop();
    }
    None
}

type Invalid = (String, String);

fn invalid(field: &str, message: impl Into<String>) -> Invalid {
    (field.to_string(), message.into())
}

fn positive(field: &str, v: f64) -> Result<(), Invalid> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn finite_vec(field: &str, v: &[f64], n: usize) -> Result<(), Invalid> {
    if v.len() != n {
        return Err(invalid(field, format!("expected {n} entries, got {}", v.len())));
    }
    if v.iter().any(|e| !e.is_finite()) {
        return Err(invalid(field, "entries must be finite"));
    }
    Ok(())
}

/// Range and consistency checks on a resolved config.
pub fn validate(c: &RunConfig) -> Result<(), Invalid> {
    let p = &c.problem;
    let unused = |field: &str, set: bool| {
        if set {
            Err(invalid(&format!("problem.{field}"), format!("not a parameter of {:?}", p.name)))
        } else {
            Ok(())
        }
    };
    let n = match p.name {
        ProblemName::Quadratic => {
            unused("terms", p.terms.is_some())?;
            unused("scale", p.scale.is_some())?;
            let n = p.dim.unwrap_or(0);
            if n == 0 {
                return Err(invalid("problem.dim", "must be >= 1"));
            }
            let k = p.condition.unwrap_or(0.0);
            if !(k >= 1.0 && k.is_finite()) {
                return Err(invalid("problem.condition", format!("must be finite and >= 1, got {k}")));
            }
            finite_vec("problem.x_star", p.x_star.as_deref().unwrap_or(&[]), n)?;
            n
        }
        ProblemName::Rosenbrock => {
            for (f, s) in [
                ("dim", p.dim.is_some()),
                ("condition", p.condition.is_some()),
                ("terms", p.terms.is_some()),
                ("scale", p.scale.is_some()),
                ("x_star", p.x_star.is_some()),
            ] {
                unused(f, s)?;
            }
            2
        }
        ProblemName::LogSumExp => {
            unused("condition", p.condition.is_some())?;
            unused("x_star", p.x_star.is_some())?;
            let n = p.dim.unwrap_or(0);
            if n == 0 {
                return Err(invalid("problem.dim", "must be >= 1"));
            }
            if p.terms.unwrap_or(0) == 0 {
                return Err(invalid("problem.terms", "must be >= 1"));
            }
            positive("problem.scale", p.scale.unwrap_or(0.0))?;
            n
        }
    };
    finite_vec("problem.x0", p.x0.as_deref().unwrap_or(&[]), n)?;

    match (&c.method.flow, &c.method.discrete) {
        (Some(_), Some(_)) => return Err(invalid("method", "give exactly one of [method.flow] or [method.discrete]")),
        (None, None) => return Err(invalid("method", "missing [method.flow] or [method.discrete]")),
        (Some(f), None) => validate_flow(f, n)?,
        (None, Some(d)) => validate_discrete(d, n)?,
    }

    if c.output.stride == 0 {
        return Err(invalid("output.stride", "must be >= 1"));
    }
    if c.output.dir.is_empty() {
        return Err(invalid("output.dir", "must not be empty"));
    }
    if let Some(v) = &c.verify {
        if !(v.tol >= 0.0) {
            return Err(invalid("verify.tol", "must be >= 0"));
        }
        positive("verify.order_constant", v.order_constant)?;
        if !(v.order_floor >= 0.0) {
            return Err(invalid("verify.order_floor", "must be >= 0"));
        }
        positive("verify.singular_arc_tol", v.singular_arc_tol)?;
        if let Some(DissipationMode::Rate { eta }) = v.dissipation {
            positive("verify.dissipation.eta", eta)?;
        }
        if !c.is_flow() {
            if let Some(bad) = v.checks.iter().find(|k| **k != CheckName::Stationarity) {
                return Err(invalid("verify.checks", format!("{bad:?} needs a flow method")));
            }
        }
    }
    Ok(())
}

fn validate_flow(f: &FlowConfig, n: usize) -> Result<(), Invalid> {
    positive("method.flow.h", f.h)?;
    positive("method.flow.t_max", f.t_max)?;
    if !(f.tol_g >= 0.0) {
        return Err(invalid("method.flow.tol_g", "must be >= 0"));
    }
    if !(f.tol_v >= 0.0) {
        return Err(invalid("method.flow.tol_v", "must be >= 0"));
    }
    if f.qn_interval == 0 {
        return Err(invalid("method.flow.qn_interval", "must be >= 1"));
    }
    f.clf.validate().map_err(|e| invalid("method.flow.clf", e.to_string()))?;
    f.metric.validate().map_err(|e| invalid("method.flow.metric.eig_floor", e.to_string()))?;
    finite_vec("method.flow.v0", f.v0.as_deref().unwrap_or(&[]), n)?;
    let only = |field: &str, set: bool, family: Family| {
        if set && f.family != family {
            Err(invalid(&format!("method.flow.{field}"), format!("only used by the {} family", family.name())))
        } else {
            Ok(())
        }
    };
    only("delta", f.delta.is_some(), Family::MinP)?;
    only("taper", f.taper.is_some(), Family::MinP)?;
    only("rate_eta", f.rate_eta.is_some(), Family::MinPStar)?;
    only("sigma_q", f.sigma_q.is_some(), Family::Generalized)?;
    only("gamma_b", f.gamma_b.is_some(), Family::Direct)?;
    only("gains", f.gains.is_some(), Family::Direct)?;
    match f.family {
        Family::MinP => positive("method.flow.delta", f.delta.unwrap_or(0.0))?,
        Family::MinPStar => positive("method.flow.rate_eta", f.rate_eta.unwrap_or(0.0))?,
        Family::Generalized => match f.sigma_q {
            Some(s) => positive("method.flow.sigma_q", s)?,
            None => return Err(invalid("method.flow.sigma_q", "required by the generalized family")),
        },
        Family::Direct => {}
    }
    f.controller().map_err(|e| {
        let field = match &e {
            accelflow::Error::InvalidParameter { name: "gains", .. } => "method.flow.gains",
            _ => "method.flow",
        };
        invalid(field, e.to_string())
    })?;
    Ok(())
}

fn validate_discrete(d: &DiscreteConfig, n: usize) -> Result<(), Invalid> {
    let allowed = d.name.allowed();
    if let Some(extra) = d.present().into_iter().find(|f| !allowed.contains(f)) {
        return Err(invalid(
            &format!("method.discrete.{extra}"),
            format!("not a parameter of {}", d.name.name()),
        ));
    }
    if d.max_iters == 0 {
        return Err(invalid("method.discrete.max_iters", "must be >= 1"));
    }
    if !(d.tol_g >= 0.0) {
        return Err(invalid("method.discrete.tol_g", "must be >= 0"));
    }
    let schedule = |field: &str, s: &Option<Schedule>, required: bool| -> Result<(), Invalid> {
        let path = format!("method.discrete.{field}");
        match s {
            None if required => Err(invalid(&path, format!("required by {}", d.name.name()))),
            None => Ok(()),
            Some(s) => {
                let values: Vec<f64> = match s {
                    Schedule::Constant(c) => vec![*c],
                    Schedule::Values(v) => {
                        if v.len() < d.max_iters {
                            return Err(invalid(&path, format!("needs max_iters = {} entries, got {}", d.max_iters, v.len())));
                        }
                        v.clone()
                    }
                };
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid(&path, "entries must be finite and >= 0"));
                }
                Ok(())
            }
        }
    };
    match d.name {
        DiscreteMethod::HeavyBall | DiscreteMethod::Nesterov1 | DiscreteMethod::Nesterov2 => {
            schedule("alpha", &d.alpha, true)?;
            schedule("beta", &d.beta, true)?;
            schedule("gamma", &d.gamma, false)?;
        }
        DiscreteMethod::Cg => {
            schedule("alpha", &d.alpha, false)?;
            if let Some(BetaCgConfig::Given(s)) = &d.beta_cg {
                schedule("beta_cg", &Some(s.clone()), true)?;
            }
        }
        DiscreteMethod::AccelNewton | DiscreteMethod::AccelQn => {
            for (field, v) in [("gamma_a", d.gamma_a), ("gamma_b", d.gamma_b), ("h", d.h)] {
                match v {
                    Some(v) => positive(&format!("method.discrete.{field}"), v)?,
                    None => return Err(invalid(&format!("method.discrete.{field}"), format!("required by {}", d.name.name()))),
                }
            }
            positive("method.discrete.eig_floor", d.eig_floor.unwrap_or(0.0))?;
            finite_vec("method.discrete.v0", d.v0.as_deref().unwrap_or(&[]), n)?;
        }
    }
    Ok(())
}

impl FlowConfig {
    /// Controller for a resolved flow block.
    pub fn controller(&self) -> accelflow::Result<accelflow::control::ControllerSpec> {
        use accelflow::control::{ControlLaw, ControllerSpec};
        let law = match self.family {
            Family::MinP => ControlLaw::MinP {
                delta: self.delta.unwrap_or(1.0),
                taper: self.taper.unwrap_or(false),
            },
            Family::MinPStar => ControlLaw::MinPStar {
                rate_eta: self.rate_eta.unwrap_or(1.0),
            },
            Family::Direct => ControlLaw::Direct(
                self.gains
                    .unwrap_or_else(|| DirectGains::matched(&self.clf, self.gamma_b.unwrap_or(1.0))),
            ),
            Family::Generalized => ControlLaw::Generalized {
                sigma_q: self.sigma_q.unwrap_or(f64::NAN),
            },
        };
        ControllerSpec::new(self.clf, self.metric.clone(), law)
    }
}
