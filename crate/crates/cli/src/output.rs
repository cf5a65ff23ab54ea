//! Trajectory CSV, summary JSON and atomic file writes.

use std::io::Write;
use std::path::Path;

use accelflow::discrete::{IterStop, IterateSequence};
use accelflow::flow::{
    AugmentedState, Sample, StopReason, TerminalResiduals, TrajectoryMeta, TrajectoryRecord, DIVERGENCE_BOUND,
};
use accelflow::verify::VerificationReport;
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{DiscreteMethod, RunConfig};
use crate::runner::{decades, first_reach, tol_g, Outcome, RunResult};

/// Write via a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// 17 significant digits, enough to round-trip every `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

pub fn flow_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(indexed("x", n));
    h.extend(indexed("v", n));
    h.extend(["E", "grad_norm", "V", "lieV", "y"].map(String::from));
    h.extend(indexed("u", n));
    h.extend(indexed("lambda_x", n));
    h.extend(indexed("lambda_v", n));
    h.push("lambda_y".into());
    h
}

pub fn discrete_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(indexed("x", n));
    h.extend(indexed("v", n));
    h.extend(["E", "grad_norm", "V", "lieV", "alpha", "beta", "gamma"].map(String::from));
    h
}

fn csv_bytes(header: Vec<String>, rows: impl Iterator<Item = Vec<f64>>) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in rows {
        w.write_record(r.into_iter().map(num))?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn flow_csv(traj: &TrajectoryRecord) -> Result<Vec<u8>, csv::Error> {
    let rows = traj.samples.iter().map(|s| {
        let st = &s.state;
        let mut r = vec![st.t];
        r.extend(st.x.iter().chain(st.v.iter()));
        r.extend([s.e, s.grad_norm, s.v_clf, s.lie_v, st.y]);
        r.extend(s.u.iter().chain(st.lambda_x.iter()).chain(st.lambda_v.iter()));
        r.push(st.lambda_y);
        r
    });
    csv_bytes(flow_header(traj.dim()), rows)
}

/// Rows of a discrete run. `v` is the companion velocity when the method has
/// one, otherwise `x_k - x_{k-1}` with `x_{-1} = x_0`. The CLF columns are
/// NaN, and the step columns hold the coefficients that produced `x_{k+1}`.
pub fn discrete_csv(
    seq: &IterateSequence,
    values: &[f64],
    stride: usize,
    velocity_companion: bool,
) -> Result<Vec<u8>, csv::Error> {
    let n = seq.dim();
    let last = seq.points.len() - 1;
    let rows = (0..seq.points.len()).filter(move |k| k % stride == 0 || *k == last).map(move |k| {
        let x = &seq.points[k];
        let v = if velocity_companion {
            seq.companion[k].clone()
        } else if k == 0 {
            DVector::zeros(n)
        } else {
            x - &seq.points[k - 1]
        };
        let mut r = vec![k as f64];
        r.extend(x.iter().chain(v.iter()));
        r.extend([values[k], seq.gradients[k].norm(), f64::NAN, f64::NAN]);
        match seq.steps.get(k) {
            Some(s) => r.extend([s.alpha, s.beta, s.gamma]),
            None => r.extend([f64::NAN; 3]),
        }
        r
    });
    csv_bytes(discrete_header(n), rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToleranceHit {
    pub tol: f64,
    /// Time (flows) or iteration (discrete) of the first sample at or below `tol`.
    pub reached_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalState {
    pub t: f64,
    pub e: f64,
    pub e_gap: Option<f64>,
    pub grad_norm: f64,
    pub v_norm: Option<f64>,
    pub x: Vec<f64>,
}

/// Summary JSON; contains nothing that varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub problem: String,
    pub dim: usize,
    pub seed: u64,
    pub kind: &'static str,
    pub method: String,
    pub stop: String,
    pub steps: usize,
    #[serde(rename = "final")]
    pub final_state: FinalState,
    pub residuals: Option<TerminalResiduals>,
    pub time_to_tolerance: Vec<ToleranceHit>,
    pub verification: VerificationReport,
    pub passed: bool,
}

pub fn summary(r: &RunResult) -> Summary {
    let oracle = &*r.problem.oracle;
    let history = r.gradient_history();
    let hits = decades(tol_g(&r.config))
        .into_iter()
        .map(|tol| ToleranceHit {
            tol,
            reached_at: first_reach(&history, tol),
        })
        .collect();
    let (kind, stop, steps, t, v_norm) = match &r.outcome {
        Outcome::Flow(traj) => {
            let stop = match traj.stop {
                StopReason::Converged => "converged",
                StopReason::TimeLimit => "time_limit",
                StopReason::Diverged => "diverged",
            };
            ("flow", stop, traj.steps, traj.last().state.t, Some(traj.last().state.v.norm()))
        }
        Outcome::Discrete(seq) => {
            let stop = match seq.stop {
                IterStop::Converged => "converged",
                IterStop::IterationLimit => "iteration_limit",
                IterStop::Diverged => "diverged",
            };
            ("discrete", stop, seq.iterations(), seq.iterations() as f64, None)
        }
    };
    let x = r.final_point();
    let e = oracle.value(x);
    Summary {
        problem: r.problem.name.clone(),
        dim: r.problem.dim(),
        seed: r.config.seed,
        kind,
        method: r.config.method_slug(),
        stop: stop.to_string(),
        steps,
        final_state: FinalState {
            t,
            e,
            e_gap: r.problem.e_star.map(|s| e - s),
            grad_norm: oracle.gradient(x).norm(),
            v_norm,
            x: x.iter().copied().collect(),
        },
        residuals: r.terminal(),
        time_to_tolerance: hits,
        passed: r.report.passed(),
        verification: r.report.clone(),
    }
}

pub fn summary_json(r: &RunResult) -> String {
    let mut s = serde_json::to_string_pretty(&summary(r)).expect("summaries serialize");
    s.push('\n');
    s
}

/// Paths of the artifacts of one run.
pub struct Artifacts {
    pub trajectory: std::path::PathBuf,
    pub summary: std::path::PathBuf,
    pub config: std::path::PathBuf,
}

pub fn artifact_paths(c: &RunConfig) -> Artifacts {
    let dir = Path::new(&c.output.dir);
    let stem = c.output_name();
    Artifacts {
        trajectory: dir.join(format!("{stem}.csv")),
        summary: dir.join(format!("{stem}.summary.json")),
        config: dir.join(format!("{stem}.config.toml")),
    }
}

pub fn write_run(r: &RunResult) -> Result<Artifacts, crate::CliError> {
    let paths = artifact_paths(&r.config);
    let csv = match &r.outcome {
        Outcome::Flow(traj) => flow_csv(traj)?,
        Outcome::Discrete(seq) => {
            let values: Vec<f64> = seq.points.iter().map(|x| r.problem.oracle.value(x)).collect();
            let accel = r.config.method.discrete.as_ref().is_some_and(|d| {
                matches!(d.name, DiscreteMethod::AccelNewton | DiscreteMethod::AccelQn)
            });
            discrete_csv(seq, &values, r.config.output.stride, accel)?
        }
    };
    write_atomic(&paths.trajectory, &csv)?;
    write_atomic(&paths.summary, summary_json(r).as_bytes())?;
    write_atomic(&paths.config, crate::config::to_toml(&r.config).as_bytes())?;
    Ok(paths)
}

/// Column lookup over a parsed trajectory CSV.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn col(&self, name: &str) -> Result<usize, crate::CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| crate::CliError::Input(format!("trajectory CSV has no column `{name}`")))
    }

    fn vector(&self, row: &[f64], prefix: &str, n: usize) -> Result<DVector<f64>, crate::CliError> {
        let mut v = DVector::zeros(n);
        for i in 0..n {
            v[i] = row[self.col(&format!("{prefix}{i}"))?];
        }
        Ok(v)
    }
}

fn read_table(path: &Path) -> Result<Table, crate::CliError> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| crate::CliError::Input(format!("row {}: {e}", i + 2)))?);
    }
    if rows.is_empty() {
        return Err(crate::CliError::Input("trajectory CSV has no rows".into()));
    }
    Ok(Table { header, rows })
}

/// Reload a flow trajectory written by [`flow_csv`]. The stop reason is
/// inferred from the last row against the config's stopping rule.
pub fn read_flow(path: &Path, c: &RunConfig, problem: &str, n: usize) -> Result<TrajectoryRecord, crate::CliError> {
    let f = c.method.flow.as_ref().expect("flow config");
    let tab = read_table(path)?;
    if tab.header != flow_header(n) {
        return Err(crate::CliError::Input(format!(
            "trajectory CSV header does not match a {n}-D flow trajectory"
        )));
    }
    let mut samples = Vec::with_capacity(tab.rows.len());
    for row in &tab.rows {
        let state = AugmentedState {
            t: row[tab.col("t")?],
            x: tab.vector(row, "x", n)?,
            v: tab.vector(row, "v", n)?,
            y: row[tab.col("y")?],
            lambda_x: tab.vector(row, "lambda_x", n)?,
            lambda_v: tab.vector(row, "lambda_v", n)?,
            lambda_y: row[tab.col("lambda_y")?],
        };
        samples.push(Sample {
            u: tab.vector(row, "u", n)?,
            e: row[tab.col("E")?],
            grad_norm: row[tab.col("grad_norm")?],
            v_clf: row[tab.col("V")?],
            lie_v: row[tab.col("lieV")?],
            state,
        });
    }
    let last = samples.last().expect("non-empty");
    let stop = if last.grad_norm <= f.tol_g && last.state.v.norm() <= f.tol_v {
        StopReason::Converged
    } else if last.state.t >= f.t_max - 0.5 * f.h {
        StopReason::TimeLimit
    } else {
        StopReason::Diverged
    };
    let steps = (last.state.t / f.h).round() as usize;
    Ok(TrajectoryRecord {
        meta: TrajectoryMeta {
            problem: problem.to_string(),
            family: f.family.name().to_string(),
            metric: f.metric.kind,
            clf: f.clf,
            h: f.h,
            integrator: f.integrator,
            mode: f.mode,
        },
        samples,
        stop,
        steps,
    })
}

/// Reload the final iterate of a discrete run; gradients are recomputed.
pub fn read_discrete(
    path: &Path,
    c: &RunConfig,
    oracle: &dyn accelflow::objective::Objective,
) -> Result<IterateSequence, crate::CliError> {
    let d = c.method.discrete.as_ref().expect("discrete config");
    let n = oracle.dim();
    let tab = read_table(path)?;
    if tab.header != discrete_header(n) {
        return Err(crate::CliError::Input(format!(
            "trajectory CSV header does not match a {n}-D discrete run"
        )));
    }
    let points: Vec<DVector<f64>> = tab.rows.iter().map(|r| tab.vector(r, "x", n)).collect::<Result<_, _>>()?;
    let gradients: Vec<DVector<f64>> = points.iter().map(|x| oracle.gradient(x)).collect();
    let last = points.last().expect("non-empty");
    let finite = last.iter().all(|e| e.is_finite());
    let stop = if !finite || last.norm() > DIVERGENCE_BOUND {
        IterStop::Diverged
    } else if gradients.last().expect("non-empty").norm() <= d.tol_g {
        IterStop::Converged
    } else {
        IterStop::IterationLimit
    };
    Ok(IterateSequence {
        points,
        gradients,
        steps: Vec::new(),
        companion: Vec::new(),
        stop,
    })
}
