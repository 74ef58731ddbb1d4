//! Browser bindings. Each export takes plain numbers and returns a JSON
//! string; the page in `www/` draws the result on a canvas.

use nalgebra::DMatrix;
use serde::Serialize;
use sqa::model::RunStatus;
use sqa::objectives::{gaussian_samples, synthetic_quadratic};
use sqa::{solve, CompositeProblem, SmoothFunction, SolverConfig, SolverKind, SqaError, Vector};
use wasm_bindgen::prelude::*;

const PATH_CAP: usize = 400;
const GRID: usize = 64;

/// `0.5 x'Hx - b'x` in the plane, started wherever the user clicked.
struct PlanarQuadratic {
    h: DMatrix<f64>,
    b: Vector,
    start: Vector,
}

impl SmoothFunction for PlanarQuadratic {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.h * x)) - self.b.dot(x)
    }

    fn gradient(&self, x: &Vector) -> sqa::Result<Vector> {
        Ok(&self.h * x - &self.b)
    }

    fn hess_vec(&self, _x: &Vector, v: &Vector) -> sqa::Result<Vector> {
        Ok(&self.h * v)
    }

    fn initial_point(&self) -> Vector {
        self.start.clone()
    }
}

#[derive(Debug, Serialize)]
pub struct SolverPath {
    pub solver: &'static str,
    pub points: Vec<[f64; 2]>,
    pub converged: bool,
}

#[derive(Debug, Serialize)]
pub struct PlanarView {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Objective on the grid, row `j` holds `y = ys[j]`.
    pub values: Vec<f64>,
    pub solution: [f64; 2],
    pub paths: Vec<SolverPath>,
}

/// Contours of a 2-dim lasso objective plus the iterate path of every solver.
pub fn planar_paths(h: [f64; 3], b: [f64; 2], mu: f64, start: [f64; 2]) -> sqa::Result<PlanarView> {
    let hm = DMatrix::from_row_slice(2, 2, &[h[0], h[1], h[1], h[2]]);
    if !(h[0] > 0.0 && h[0] * h[2] - h[1] * h[1] > 0.0) {
        return Err(SqaError::Contract(
            "the 2x2 matrix must be positive definite".into(),
        ));
    }
    let problem = CompositeProblem::new(
        Box::new(PlanarQuadratic {
            h: hm,
            b: Vector::from_column_slice(&b),
            start: Vector::from_column_slice(&start),
        }),
        mu,
    )?;
    let config = SolverConfig {
        tol_inf: 1e-9,
        ..SolverConfig::default()
    };
    let mut paths = Vec::new();
    let mut solution = start;
    for kind in SolverKind::ALL {
        // the k-th point is the result of a run capped at k outer steps;
        // runs are deterministic so the prefixes agree
        let mut points = vec![start];
        let mut converged = false;
        for cap in 1..=PATH_CAP {
            let out = solve(
                &problem,
                kind,
                &SolverConfig {
                    max_outer: cap,
                    ..config.clone()
                },
            )?;
            let x = [out.solution[0], out.solution[1]];
            if points.last() != Some(&x) {
                points.push(x);
            }
            if out.report.status == RunStatus::Converged {
                converged = true;
                solution = x;
                break;
            }
        }
        paths.push(SolverPath {
            solver: kind.name(),
            points,
            converged,
        });
    }

    let (mut lo, mut hi) = (
        [start[0].min(solution[0]), start[1].min(solution[1])],
        [start[0].max(solution[0]), start[1].max(solution[1])],
    );
    for i in 0..2 {
        lo[i] = lo[i].min(0.0);
        hi[i] = hi[i].max(0.0);
        let pad = 0.25 * (hi[i] - lo[i]).max(1.0);
        lo[i] -= pad;
        hi[i] += pad;
    }
    let axis = |i: usize| -> Vec<f64> {
        (0..GRID)
            .map(|t| lo[i] + (hi[i] - lo[i]) * t as f64 / (GRID - 1) as f64)
            .collect()
    };
    let (xs, ys) = (axis(0), axis(1));
    let mut values = Vec::with_capacity(GRID * GRID);
    for y in &ys {
        for x in &xs {
            values.push(problem.objective(&Vector::from_column_slice(&[*x, *y])));
        }
    }
    Ok(PlanarView {
        xs,
        ys,
        values,
        solution,
        paths,
    })
}

#[derive(Debug, Serialize)]
pub struct SolverTrace {
    pub solver: &'static str,
    pub residuals: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub fg_evaluations: usize,
    pub hess_vec_products: usize,
    pub converged: bool,
    /// Set when the solver stopped with an error; the counters are then zero.
    pub error: Option<String>,
}

/// Residual history of all four solvers on a random quadratic. A solver
/// error is reported in its own trace rather than failing the call.
pub fn convergence(
    n: usize,
    condition: f64,
    seed: u64,
    mu_scale: f64,
) -> sqa::Result<Vec<SolverTrace>> {
    let q = synthetic_quadratic(n, condition, seed)?;
    let mu = mu_scale * q.median_mu();
    let problem = CompositeProblem::new(Box::new(q), mu)?;
    let config = SolverConfig {
        tol_inf: 1e-6,
        ..SolverConfig::default()
    };
    let traces = SolverKind::ALL
        .iter()
        .map(|&kind| match solve(&problem, kind, &config) {
            Ok(out) => {
                let r = out.report;
                SolverTrace {
                    solver: kind.name(),
                    residuals: r.trace.iter().map(|t| t.residual_inf).collect(),
                    outer_iterations: r.outer_iterations,
                    inner_iterations: r.inner_iterations,
                    fg_evaluations: r.fg_evaluations,
                    hess_vec_products: r.hess_vec_products,
                    converged: r.status == RunStatus::Converged,
                    error: None,
                }
            }
            Err(e) => SolverTrace {
                solver: kind.name(),
                residuals: Vec::new(),
                outer_iterations: 0,
                inner_iterations: 0,
                fg_evaluations: 0,
                hess_vec_products: 0,
                converged: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(traces)
}

#[derive(Debug, Serialize)]
pub struct PrecisionView {
    pub p: usize,
    /// Row-major estimate of the inverse covariance.
    pub estimate: Vec<f64>,
    /// Row-major true inverse covariance.
    pub truth: Vec<f64>,
    pub nonzeros: usize,
    pub outer_iterations: usize,
    pub residual: f64,
}

/// Sparse inverse covariance from samples of an AR(1) process, whose true
/// inverse covariance is tridiagonal.
pub fn precision_pattern(
    p: usize,
    rho: f64,
    samples: usize,
    mu: f64,
    seed: u64,
) -> sqa::Result<PrecisionView> {
    if !(rho.abs() < 1.0) {
        return Err(SqaError::Contract(format!(
            "correlation must lie in (-1, 1), got {rho}"
        )));
    }
    let sigma = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| SqaError::Contract("correlation matrix is not positive definite".into()))?;
    let x = gaussian_samples(samples, p, seed) * chol.l().transpose();
    let cov = sqa::io::sample_covariance(&x)?;
    let problem = CompositeProblem::new(Box::new(cov.clone()), mu)?;
    let out = solve(&problem, SolverKind::SqaObmCg, &SolverConfig::default())?;
    let est = cov.unflatten(&out.solution)?;
    let truth = chol.inverse();
    let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
    Ok(PrecisionView {
        p,
        estimate: row_major(&est),
        truth: row_major(&truth),
        nonzeros: est.iter().filter(|v| **v != 0.0).count(),
        outer_iterations: out.report.outer_iterations,
        residual: out.report.final_residual_inf,
    })
}

fn to_js<T: Serialize>(r: sqa::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = planarPaths)]
#[allow(clippy::too_many_arguments)]
pub fn planar_paths_js(
    h11: f64,
    h12: f64,
    h22: f64,
    b1: f64,
    b2: f64,
    mu: f64,
    x1: f64,
    x2: f64,
) -> Result<String, JsError> {
    to_js(planar_paths([h11, h12, h22], [b1, b2], mu, [x1, x2]))
}

#[wasm_bindgen(js_name = convergence)]
pub fn convergence_js(
    n: usize,
    condition: f64,
    seed: u32,
    mu_scale: f64,
) -> Result<String, JsError> {
    to_js(convergence(n, condition, seed as u64, mu_scale))
}

#[wasm_bindgen(js_name = precisionPattern)]
pub fn precision_pattern_js(
    p: usize,
    rho: f64,
    samples: usize,
    mu: f64,
    seed: u32,
) -> Result<String, JsError> {
    to_js(precision_pattern(p, rho, samples, mu, seed as u64))
}
