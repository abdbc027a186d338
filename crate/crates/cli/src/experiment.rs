use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nmprox::diagnostics::{self, audit_trace, DEFAULT_TAIL_FRACTION};
use nmprox::solver::{self, solve, solve_recording};
use nmprox::{CompositeProblem, ReferencePolicy, RunResult, SolveError, SolverParams};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{self, ExperimentSummary, RateEntry, RunSummary};

/// Environment variable that sets the number of worker threads for sweeps.
pub const JOBS_ENV: &str = "NMPROX_JOBS";

pub const SUMMARY_FILE: &str = "summary.json";

/// Window of the max-rule row in `compare` when the config uses the mean rule.
pub const DEFAULT_MAX_WINDOW: usize = 10;

/// Tolerance on fitted log-log slopes against the predicted exponent.
pub const SLOPE_TOLERANCE: f64 = 0.15;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver rejected the configuration: {0}")]
    Solve(#[from] SolveError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Worker pool sized by [`JOBS_ENV`], or by `runs` capped at the core count.
pub fn worker_pool(runs: usize) -> Result<rayon::ThreadPool, ConfigError> {
    let threads = match std::env::var(JOBS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                return Err(ConfigError::Invalid {
                    field: JOBS_ENV.into(),
                    reason: format!("`{v}` is not a positive integer"),
                })
            }
        },
        Err(_) => {
            let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
            runs.clamp(1, cores)
        }
    };
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool"))
}

pub struct RunOutput {
    pub repeat: usize,
    pub x0_seed: Option<u64>,
    pub result: RunResult,
}

/// Solves every repeat of `config`, in parallel, in repeat order.
pub fn execute(
    config: &ExperimentConfig,
    problem: &CompositeProblem,
) -> Result<Vec<RunOutput>, ExperimentError> {
    let pool = worker_pool(config.repeats)?;
    let outputs: Result<Vec<_>, SolveError> = pool.install(|| {
        (0..config.repeats)
            .into_par_iter()
            .map(|repeat| {
                let x0 = config.x0_policy.initial_point(problem, repeat);
                let result = if config.record_iterates {
                    solve_recording(problem, &config.params, &x0)?
                } else {
                    solve(problem, &config.params, &x0)?
                };
                Ok(RunOutput {
                    repeat,
                    x0_seed: config.x0_policy.seed_for(repeat),
                    result,
                })
            })
            .collect()
    });
    Ok(outputs?)
}

fn rate_entry(
    series: &str,
    fit: Result<diagnostics::RateReport, nmprox::DiagnosticError>,
) -> RateEntry {
    match fit {
        Ok(report) => RateEntry {
            series: series.into(),
            report: Some(report),
            error: None,
        },
        Err(e) => RateEntry {
            series: series.into(),
            report: None,
            error: Some(e.to_string()),
        },
    }
}

/// Rate fits for problems that declare a KL exponent and know their optimum.
pub fn rate_entries(problem: &CompositeProblem, result: &RunResult) -> Vec<RateEntry> {
    let (Some(kl), Some(opt)) = (&problem.kl_hypothesis, &problem.optimum) else {
        return Vec::new();
    };
    let refs = result.references();
    let refs = &refs[..diagnostics::usable_prefix(&refs, opt.psi_star)];
    let mut entries = Vec::new();
    if kl.is_linear_regime() {
        entries.push(rate_entry(
            "reference",
            diagnostics::estimate_q_factor(refs, opt.psi_star, DEFAULT_TAIL_FRACTION),
        ));
        return entries;
    }
    if let Some(slope) = kl.value_slope() {
        let fit = diagnostics::fit_loglog_slope(refs, opt.psi_star, DEFAULT_TAIL_FRACTION)
            .map(|r| r.with_prediction(slope, SLOPE_TOLERANCE));
        entries.push(rate_entry("reference", fit));
    }
    if let (Some(slope), Some(x_star), Some(iterates)) =
        (kl.iterate_slope(), &opt.x_star, &result.iterates)
    {
        let dist = diagnostics::iterate_distance_series(&iterates[..result.trace.len()], x_star);
        let fit = diagnostics::fit_loglog_slope(&dist, 0.0, DEFAULT_TAIL_FRACTION)
            .map(|r| r.with_prediction(slope, SLOPE_TOLERANCE));
        entries.push(rate_entry("iterate_distance", fit));
    }
    entries
}

/// Builds the problem, attaching a reference optimum when the problem
/// declares a KL exponent but has no closed-form optimum.
pub fn prepare_problem(config: &ExperimentConfig) -> Result<CompositeProblem, ExperimentError> {
    let problem = config.build_problem()?;
    if problem.kl_hypothesis.is_some() && problem.optimum.is_none() {
        return Ok(solver::with_reference_optimum(problem)?);
    }
    Ok(problem)
}

/// Runs the experiment and writes one trace per run plus `summary.json`
/// into `out_dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<ExperimentSummary, ExperimentError> {
    let problem = prepare_problem(config)?;
    let outputs = execute(config, &problem)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut runs = Vec::with_capacity(outputs.len());
    for out in outputs {
        let trace_file = format!("trace_{:03}.csv", out.repeat);
        let path = out_dir.join(&trace_file);
        let file = File::create(&path).map_err(io_err(&path))?;
        output::write_trace_csv(BufWriter::new(file), &out.result.trace).map_err(|source| {
            ExperimentError::Csv {
                path: path.clone(),
                source,
            }
        })?;

        let iterates_file = match &out.result.iterates {
            Some(iterates) => {
                let name = format!("iterates_{:03}.csv", out.repeat);
                let path = out_dir.join(&name);
                let file = File::create(&path).map_err(io_err(&path))?;
                output::write_iterates_csv(BufWriter::new(file), iterates).map_err(|source| {
                    ExperimentError::Csv {
                        path: path.clone(),
                        source,
                    }
                })?;
                Some(name)
            }
            None => None,
        };

        let r = &out.result;
        runs.push(RunSummary {
            repeat: out.repeat,
            x0_seed: out.x0_seed,
            trace_file,
            iterates_file,
            status: r.status,
            iterations: r.iterations(),
            final_residual: r.final_residual(),
            total_backtracks: r.total_backtracks(),
            wall_time_seconds: r.wall_time,
            audit: audit_trace(&r.trace, &config.params),
            rates: if r.status.is_error() {
                Vec::new()
            } else {
                rate_entries(&problem, r)
            },
        });
    }

    let summary = ExperimentSummary {
        problem: problem.name.clone(),
        config: config.clone(),
        runs,
    };
    let path = out_dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(summary)
}

/// One row of a monotone / mean / max comparison.
pub struct CompareRow {
    pub label: String,
    pub params: SolverParams,
    pub result: RunResult,
}

/// The three reference policies compared by `compare`.
pub fn comparison_params(params: &SolverParams) -> Vec<(String, SolverParams)> {
    let window = match params.reference_policy {
        ReferencePolicy::Max { window } => window,
        ReferencePolicy::Mean => DEFAULT_MAX_WINDOW,
    };
    vec![
        (
            "monotone".into(),
            SolverParams {
                p_min: 1.0,
                reference_policy: ReferencePolicy::Mean,
                ..params.clone()
            },
        ),
        (
            format!("mean(p={})", params.p_min),
            SolverParams {
                reference_policy: ReferencePolicy::Mean,
                ..params.clone()
            },
        ),
        (
            format!("max(W={window})"),
            SolverParams {
                reference_policy: ReferencePolicy::Max { window },
                ..params.clone()
            },
        ),
    ]
}

/// Solves the first start point of `config` under each policy of
/// [`comparison_params`].
pub fn compare(config: &ExperimentConfig) -> Result<Vec<CompareRow>, ExperimentError> {
    let problem = config.build_problem()?;
    let x0 = config.x0_policy.initial_point(&problem, 0);
    let rows = comparison_params(&config.params);
    let pool = worker_pool(rows.len())?;
    let results: Result<Vec<_>, SolveError> = pool.install(|| {
        rows.into_par_iter()
            .map(|(label, params)| {
                let result = solve(&problem, &params, &x0)?;
                Ok(CompareRow {
                    label,
                    params,
                    result,
                })
            })
            .collect()
    });
    Ok(results?)
}

pub fn format_comparison(rows: &[CompareRow]) -> String {
    let mut out = format!(
        "{:<16} {:<22} {:>10} {:>11} {:>14} {:>10}\n",
        "policy", "status", "iterations", "backtracks", "residual", "wall_s"
    );
    for row in rows {
        let r = &row.result;
        let status = serde_json::to_value(r.status).expect("status serializes");
        out.push_str(&format!(
            "{:<16} {:<22} {:>10} {:>11} {:>14.6e} {:>10.4}\n",
            row.label,
            status.as_str().unwrap_or("?"),
            r.iterations(),
            r.total_backtracks(),
            r.final_residual().unwrap_or(f64::NAN),
            r.wall_time,
        ));
    }
    out
}
