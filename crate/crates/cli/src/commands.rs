//! The `run`, `compare` and `verify` verbs.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use accelflow::metric::MetricKind;

use crate::config::{self, ConfigError, DiscreteMethod, RunConfig};
use crate::output::{self, write_atomic};
use crate::runner::{self, decades, first_reach, tol_g, Outcome, RunResult};
use crate::CliError;

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub stride: Option<usize>,
    pub seed: Option<u64>,
}

/// Read, parse and validate a config, then apply the overrides.
pub fn load(path: &Path, o: &Overrides) -> Result<RunConfig, CliError> {
    let source = std::fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut c = config::parse(&source).map_err(|e| with_file(path, e))?;
    if let Some(d) = &o.out_dir {
        c.output.dir = d.to_string_lossy().into_owned();
    }
    if let Some(s) = o.stride {
        c.output.stride = s;
    }
    if let Some(s) = o.seed {
        c.seed = s;
    }
    config::validate(&c).map_err(|(field, message)| {
        with_file(
            path,
            ConfigError {
                line: None,
                field,
                message,
            },
        )
    })?;
    Ok(c)
}

fn with_file(path: &Path, mut e: ConfigError) -> CliError {
    e.message = format!("{} ({})", e.message, path.display());
    CliError::Config(e)
}

fn stop_name(r: &RunResult) -> String {
    let s = output::summary(r);
    s.stop
}

fn describe(r: &RunResult) -> String {
    let s = output::summary(r);
    let unit = if r.config.is_flow() { format!("t={:.6}", s.final_state.t) } else { String::new() };
    format!(
        "{} on {}: {} after {} steps {}|grad|={:.3e}",
        s.method,
        s.problem,
        s.stop,
        s.steps,
        if unit.is_empty() { unit } else { unit + ", " },
        s.final_state.grad_norm
    )
}

pub fn run(path: &Path, o: &Overrides) -> Result<(), CliError> {
    let c = load(path, o)?;
    let r = runner::execute(&c)?;
    let paths = output::write_run(&r)?;
    println!("{}", describe(&r));
    println!("{}", r.report);
    println!("wrote {}", paths.trajectory.display());
    println!("wrote {}", paths.summary.display());
    println!("wrote {}", paths.config.display());
    if r.diverged() {
        return Err(CliError::Diverged(format!("{} diverged", c.method_slug())));
    }
    if !r.report.passed() {
        return Err(CliError::VerificationFailed(format!(
            "{} of {} checks failed",
            r.report.summary.failed,
            r.report.checks.len()
        )));
    }
    Ok(())
}

fn metric_name(c: &RunConfig) -> &'static str {
    match (&c.method.flow, &c.method.discrete) {
        (Some(f), _) => f.metric.kind.name(),
        (None, Some(d)) => match d.name {
            DiscreteMethod::AccelNewton => d.metric.unwrap_or(MetricKind::Hessian).name(),
            DiscreteMethod::AccelQn => MetricKind::QuasiNewton.name(),
            _ => MetricKind::Euclidean.name(),
        },
        (None, None) => "",
    }
}

fn tol_label(tol: f64) -> String {
    format!("g<={tol:e}")
}

pub fn compare(paths: &[PathBuf], o: &Overrides) -> Result<(), CliError> {
    let mut configs = paths.iter().map(|p| load(p, o)).collect::<Result<Vec<_>, _>>()?;
    let first = &configs[0];
    for (c, p) in configs.iter().zip(paths).skip(1) {
        if c.problem != first.problem || c.seed != first.seed {
            return Err(CliError::Config(ConfigError {
                line: None,
                field: "problem".into(),
                message: format!(
                    "{} defines a different problem or seed than {}",
                    p.display(),
                    paths[0].display()
                ),
            }));
        }
    }
    let dir = o.out_dir.clone().unwrap_or_else(|| PathBuf::from(&first.output.dir));
    let mut seen = HashSet::new();
    for (i, c) in configs.iter_mut().enumerate() {
        let mut label = c.output_name();
        if !seen.insert(label.clone()) {
            label = format!("{label}_{i}");
            seen.insert(label.clone());
        }
        c.output.name = Some(label);
        c.output.dir = dir.to_string_lossy().into_owned();
    }

    let results: Vec<Result<RunResult, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| s.spawn(move || runner::execute(c).map_err(CliError::from)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("compare worker panicked")).collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let min_tol = results.iter().map(|r| tol_g(&r.config)).fold(f64::INFINITY, f64::min);
    let tols = decades(min_tol);
    let mut header: Vec<String> = ["label", "kind", "method", "metric", "unit", "stop", "steps"]
        .map(String::from)
        .to_vec();
    header.extend(tols.iter().map(|t| tol_label(*t)));
    header.push("final_E".into());

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in &results {
        output::write_run(r)?;
        let s = output::summary(r);
        let history = r.gradient_history();
        let mut row = vec![
            r.config.output_name(),
            s.kind.to_string(),
            match &r.outcome {
                Outcome::Flow(_) => r.config.method.flow.as_ref().map(|f| f.family.name()).unwrap_or_default().to_string(),
                Outcome::Discrete(_) => r.config.method_slug(),
            },
            metric_name(&r.config).to_string(),
            if r.config.is_flow() { "t".into() } else { "k".into() },
            stop_name(r),
            s.steps.to_string(),
        ];
        let cell = |v: f64| if r.config.is_flow() { format!("{v:.16e}") } else { format!("{v}") };
        row.extend(tols.iter().map(|t| first_reach(&history, *t).map(cell).unwrap_or_default()));
        row.push(format!("{:.16e}", s.final_state.e));
        w.write_record(&row)?;
        println!("{}", describe(r));
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    let out = dir.join("compare.csv");
    write_atomic(&out, &bytes)?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn verify(trajectory: &Path, config_path: &Path, o: &Overrides) -> Result<(), CliError> {
    let c = load(config_path, o)?;
    let problem = runner::build_problem(&c)?;
    let outcome = if c.is_flow() {
        Outcome::Flow(output::read_flow(trajectory, &c, &problem.name, problem.dim())?)
    } else {
        Outcome::Discrete(output::read_discrete(trajectory, &c, &*problem.oracle)?)
    };
    let v = c.verify.clone().expect("resolved configs carry a verify block");
    let report = runner::verify_outcome(&c, &v, &problem, &outcome)?;
    println!("{report}");

    let stem = trajectory
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| c.output_name());
    let dir = match &o.out_dir {
        Some(d) => d.clone(),
        None => trajectory.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let out = dir.join(format!("{stem}.verify.json"));
    let mut json = serde_json::to_string_pretty(&report).expect("reports serialize");
    json.push('\n');
    write_atomic(&out, json.as_bytes())?;
    println!("wrote {}", out.display());
    if !report.passed() {
        return Err(CliError::VerificationFailed(format!(
            "{} of {} checks failed",
            report.summary.failed,
            report.checks.len()
        )));
    }
    Ok(())
}
