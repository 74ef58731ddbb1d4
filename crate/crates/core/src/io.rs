//! SVMLight and dense-matrix readers, run specifications and reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqaError};
use crate::model::{ConvergenceReport, SolverConfig, SolverKind};
use crate::objectives::{CovarianceProblem, CsrMatrix, LogisticDataset};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| SqaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| SqaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(line: usize, message: impl Into<String>) -> SqaError {
    SqaError::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_svmlight(path: &Path) -> Result<LogisticDataset> {
    parse_svmlight_str(&read(path)?, None)
}

/// Parses `label idx:val ...` lines. Indices are 1-based; positive labels
/// become `+1`, all others `-1`. `features` overrides the inferred width.
pub fn parse_svmlight_str(text: &str, features: Option<usize>) -> Result<LogisticDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad label {label_tok:?}")))?;
        let mut row: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line_no, format!("expected idx:val, got {tok:?}")))?;
            if idx == "qid" {
                continue;
            }
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad index in {tok:?}")))?;
            if idx == 0 {
                return Err(parse_err(line_no, "indices are 1-based"));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad value in {tok:?}")))?;
            if !val.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value in {tok:?}")));
            }
            if row.last().is_some_and(|&(prev, _)| prev >= idx - 1) {
                return Err(parse_err(line_no, "indices must be strictly increasing"));
            }
            row.push((idx - 1, val));
        }
        width = width.max(row.last().map_or(0, |&(j, _)| j + 1));
        labels.push(if label > 0.0 { 1.0 } else { -1.0 });
        rows.push(row);
    }
    let ncols = match features {
        Some(n) if n < width => {
            return Err(SqaError::Contract(format!(
                "feature count {n} is below the largest index {width}"
            )))
        }
        Some(n) => n,
        None => width,
    };
    LogisticDataset::new(CsrMatrix::from_rows(ncols, &rows)?, labels)
}

/// Writes values with shortest round-trip formatting.
pub fn render_svmlight(data: &LogisticDataset) -> String {
    let mut out = String::new();
    for (i, &y) in data.labels().iter().enumerate() {
        out.push_str(if y > 0.0 { "+1" } else { "-1" });
        for (j, v) in data.features().row(i) {
            let _ = write!(out, " {}:{v:?}", j + 1);
        }
        out.push('\n');
    }
    out
}

pub fn write_svmlight(data: &LogisticDataset, path: &Path) -> Result<()> {
    write(path, &render_svmlight(data))
}

/// Rows of whitespace-separated reals; blank lines and `#` comments skipped.
pub fn parse_dense_matrix_str(text: &str) -> Result<DMatrix<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut nrows = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(lineno + 1, format!("bad number {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(parse_err(lineno + 1, format!("expected {c} columns, got {}", row.len())))
            }
            _ => {}
        }
        values.extend(row);
        nrows += 1;
    }
    let cols = cols.unwrap_or(0);
    Ok(DMatrix::from_row_slice(nrows, cols, &values))
}

pub fn parse_dense_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_dense_matrix_str(&read(path)?)
}

/// `(1/N) sum (row_i - mean)(row_i - mean)'`, symmetrized.
pub fn sample_covariance(samples: &DMatrix<f64>) -> Result<CovarianceProblem> {
    let n = samples.nrows();
    if n < 2 {
        return Err(SqaError::Contract(format!("need at least 2 samples, got {n}")));
    }
    if samples.ncols() == 0 {
        return Err(SqaError::Contract("samples have no columns".into()));
    }
    let mean = samples.row_mean();
    let mut centered = samples.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let s = centered.transpose() * &centered / n as f64;
    CovarianceProblem::new((&s + s.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Logistic,
    Covariance,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub problem_kind: ProblemKind,
    pub data_path: Option<PathBuf>,
    pub mu: f64,
    pub solver: SolverKind,
    pub config: SolverConfig,
    pub report_path: Option<PathBuf>,
    pub report_format: ReportFormat,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.problem_kind != ProblemKind::Synthetic && self.data_path.is_none() {
            return Err(SqaError::Contract("a data path is required for this problem".into()));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(SqaError::Contract(format!("mu must be nonnegative, got {}", self.mu)));
        }
        self.config.validate()
    }
}

#[derive(Serialize, Deserialize)]
struct ReportDocument {
    spec: RunSpec,
    report: ConvergenceReport,
}

pub const CSV_SUMMARY_HEADER: &str =
    "outer_iterations,inner_iterations,fg_evaluations,hess_vec_products,time_seconds,final_residual_inf";
pub const CSV_TRACE_HEADER: &str = "k,phi,residual_inf,alpha,inner_iterations,eta";

pub fn render_report(report: &ConvergenceReport, spec: &RunSpec, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let doc = ReportDocument {
                spec: spec.clone(),
                report: report.clone(),
            };
            Ok(serde_json::to_string_pretty(&doc)? + "\n")
        }
        ReportFormat::Csv => {
            let mut out = String::new();
            let _ = writeln!(out, "{CSV_SUMMARY_HEADER}");
            let _ = writeln!(
                out,
                "{},{},{},{},{:?},{:?}",
                report.outer_iterations,
                report.inner_iterations,
                report.fg_evaluations,
                report.hess_vec_products,
                report.wall_time_seconds,
                report.final_residual_inf
            );
            out.push('\n');
            let _ = writeln!(out, "{CSV_TRACE_HEADER}");
            for t in &report.trace {
                let _ = writeln!(
                    out,
                    "{},{:?},{:?},{:?},{},{:?}",
                    t.k, t.phi, t.residual_inf, t.alpha, t.inner_iterations, t.eta
                );
            }
            Ok(out)
        }
    }
}

pub fn write_report(
    report: &ConvergenceReport,
    spec: &RunSpec,
    path: &Path,
    format: ReportFormat,
) -> Result<()> {
    write(path, &render_report(report, spec, format)?)
}

/// Reads back a JSON report written by [`write_report`].
pub fn read_report_json(text: &str) -> Result<(RunSpec, ConvergenceReport)> {
    let doc: ReportDocument = serde_json::from_str(text)?;
    Ok((doc.spec, doc.report))
}
