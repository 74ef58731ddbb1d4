//! Benchmark driver: one solve per invocation.
//!
//! Exit codes: 0 converged, 2 iteration cap, 1 usage or runtime error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, ValueEnum};
use sqa::io::{
    parse_dense_matrix, parse_svmlight, sample_covariance, write_report, ProblemKind, ReportFormat,
    RunSpec,
};
use sqa::model::{EtaRule, RunStatus};
use sqa::objectives::{synthetic_quadratic, CovarianceProblem};
use sqa::{solve, CompositeProblem, SmoothFunction, SolverConfig, SolverKind, SqaError};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CAP: i32 = 2;

const COVARIANCE_MU: f64 = 0.5;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProblemArg {
    Logistic,
    Covariance,
    Synthetic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EtaArg {
    /// max(1/k, 0.1), capped at 0.9
    #[value(alias = "harmonic")]
    Paper,
    /// ||F(x_k)||_2, capped at 0.9
    Residual,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "sqa",
    version,
    about = "l1-regularized convex minimization by inexact proximal Newton"
)]
struct Args {
    #[arg(long, value_enum)]
    problem: ProblemArg,
    /// SVMLight file (logistic) or dense covariance matrix (covariance)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Raw samples, one per row, to estimate the covariance from
    #[arg(long, conflicts_with = "data")]
    samples: Option<PathBuf>,
    /// Regularization weight. Covariance defaults to 0.5; synthetic to the median |b_i|
    #[arg(long)]
    mu: Option<f64>,
    /// fista, sqa_fista, sqa_obm_cg or sqa_obm_qn
    #[arg(long, default_value = "sqa_obm_cg", value_parser = parse_solver)]
    solver: SolverKind,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 3000)]
    max_outer: usize,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    #[arg(long, default_value_t = 0.1)]
    zeta: f64,
    #[arg(long, value_enum, default_value = "paper")]
    eta_rule: EtaArg,
    /// L-BFGS pairs kept by sqa_obm_qn
    #[arg(long, default_value_t = 50)]
    memory: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here; without it the report goes nowhere and only the summary prints
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Synthetic dimension
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Synthetic condition number
    #[arg(long, default_value_t = 100.0)]
    condition: f64,
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    SolverKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = SolverKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown solver '{s}', expected one of {}", names.join(", "))
    })
}

/// Parses `args` (program name first), runs the solve and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_CONVERGED,
                _ => EXIT_ERROR,
            };
        }
    };
    match execute(&args) {
        Ok(RunStatus::Converged) => EXIT_CONVERGED,
        Ok(RunStatus::IterationCap) => EXIT_CAP,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, SqaError::Contract(_)) {
                eprintln!("run `sqa --help` for usage");
            }
            EXIT_ERROR
        }
    }
}

fn run_spec(args: &Args, mu: f64) -> RunSpec {
    let config = SolverConfig {
        theta: args.theta,
        zeta: args.zeta,
        tau: args.tau,
        tol_inf: args.tol,
        max_outer: args.max_outer,
        eta_rule: match args.eta_rule {
            EtaArg::Paper => EtaRule::Harmonic,
            EtaArg::Residual => EtaRule::Residual,
        },
        lbfgs_memory: args.memory,
        seed: args.seed,
        ..SolverConfig::default()
    };
    RunSpec {
        problem_kind: match args.problem {
            ProblemArg::Logistic => ProblemKind::Logistic,
            ProblemArg::Covariance => ProblemKind::Covariance,
            ProblemArg::Synthetic => ProblemKind::Synthetic,
        },
        data_path: args.data.clone().or_else(|| args.samples.clone()),
        mu,
        solver: args.solver,
        config,
        report_path: args.report.clone(),
        report_format: match args.format {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        },
    }
}

fn load(args: &Args) -> sqa::Result<(Box<dyn SmoothFunction>, f64)> {
    let missing = |what: &str| {
        SqaError::Contract(format!(
            "--problem {what} needs {}",
            match what {
                "logistic" => "--data <svmlight file>",
                _ => "--data <matrix file> or --samples <file>",
            }
        ))
    };
    match args.problem {
        ProblemArg::Synthetic => {
            let q = synthetic_quadratic(args.n, args.condition, args.seed)?;
            let mu = args.mu.unwrap_or_else(|| q.median_mu());
            Ok((Box::new(q), mu))
        }
        ProblemArg::Logistic => {
            let path = args.data.as_ref().ok_or_else(|| missing("logistic"))?;
            let mu = args.mu.ok_or_else(|| {
                SqaError::Contract("--problem logistic needs an explicit --mu".into())
            })?;
            Ok((Box::new(parse_svmlight(path)?), mu))
        }
        ProblemArg::Covariance => {
            let problem = match (&args.data, &args.samples) {
                (Some(path), _) => CovarianceProblem::new(parse_dense_matrix(path)?)?,
                (None, Some(path)) => sample_covariance(&parse_dense_matrix(path)?)?,
                (None, None) => return Err(missing("covariance")),
            };
            Ok((Box::new(problem), args.mu.unwrap_or(COVARIANCE_MU)))
        }
    }
}

fn execute(args: &Args) -> sqa::Result<RunStatus> {
    let (smooth, mu) = load(args)?;
    let spec = run_spec(args, mu);
    spec.validate()?;
    let problem = CompositeProblem::new(smooth, mu)?;
    let outcome = solve(&problem, spec.solver, &spec.config)?;
    let report = &outcome.report;
    if let Some(path) = &spec.report_path {
        write_report(report, &spec, path, spec.report_format)?;
    }
    println!(
        "solver {} on {} variables, mu {mu:e}",
        spec.solver.name(),
        problem.dim()
    );
    println!("status {:?}", report.status);
    println!(
        "outer {} inner {} fg {} hess-vec {} time {:.3}s residual {:e}",
        report.outer_iterations,
        report.inner_iterations,
        report.fg_evaluations,
        report.hess_vec_products,
        report.wall_time_seconds,
        report.final_residual_inf
    );
    Ok(report.status)
}
