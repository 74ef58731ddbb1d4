//! Outer loop: model construction, inexactness-gated inner solve, backtracking
//! line search on the composite objective, and the FISTA baseline.

use crate::error::{Result, SqaError};
use crate::inner::{
    fista_composite, fista_inner, obm_solve, InnerResult, InnerStatus, LbfgsStore, LbfgsUpdate,
    ObmOptions, ObmVariant,
};
use crate::inner::fista::value_slack;
use crate::model::{
    inf_norm, l1_norm, CompositeProblem, ConvergenceReport, EtaRule, EvaluatedPoint,
    HessianSource, InexactnessMode, InnerSolverKind, LinearOperator, QuadraticModel, RunStatus,
    SmoothPart, SolverConfig, SolverKind, Telemetry, TraceEntry,
};
use crate::prox::{is_optimal, point_residual, residual};
use crate::Vector;

/// Smallest step the outer line search tries before giving up.
pub const MIN_OUTER_STEP: f64 = 1e-14;

/// `min(cap, max(1/k, floor))` for outer iteration `k >= 1`.
pub fn eta_schedule(k: usize, floor: f64, cap: f64) -> Result<f64> {
    if k < 1 {
        return Err(SqaError::Contract("outer iterations are counted from 1".into()));
    }
    Ok((1.0 / k as f64).max(floor).min(cap))
}

fn forcing_term(config: &SolverConfig, k: usize, f_norm2: f64) -> Result<f64> {
    match config.eta_rule {
        EtaRule::Harmonic => eta_schedule(k, config.eta_floor, config.eta_cap),
        EtaRule::Residual => Ok(f_norm2.min(config.eta_cap)),
        EtaRule::Constant(eta) => Ok(eta),
    }
}

/// Both sides of both inequalities of the inexactness test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InexactnessDiagnostics {
    /// `||F_q(x_k; x_hat)||_2`.
    pub residual_norm: f64,
    /// `eta ||F(x_k)||_2`.
    pub residual_bound: f64,
    /// `q_k(x_hat) - q_k(x_k)`.
    pub model_change: f64,
    /// `0` in simple mode, `zeta (l_k(x_hat) - l_k(x_k))` in strengthened mode.
    pub decrease_bound: f64,
    pub satisfied: bool,
}

/// Inexactness test for an already evaluated model point.
pub fn inexactness_at(
    model: &QuadraticModel<'_>,
    point: &EvaluatedPoint,
    eta: f64,
    f_norm2: f64,
    tau: f64,
    mode: InexactnessMode,
    zeta: f64,
) -> Result<InexactnessDiagnostics> {
    let residual_norm = point_residual(point, tau, model.mu())?.norm();
    let residual_bound = eta * f_norm2;
    let model_change = point.value - model.value_at_reference();
    let (decrease_bound, decrease_ok) = match mode {
        InexactnessMode::Simple => (0.0, model_change < 0.0),
        InexactnessMode::Strengthened => {
            let linear_change = model.linear_value(&point.x)? - model.value_at_reference();
            let bound = zeta * linear_change;
            (bound, model_change <= bound)
        }
    };
    Ok(InexactnessDiagnostics {
        residual_norm,
        residual_bound,
        model_change,
        decrease_bound,
        satisfied: residual_norm <= residual_bound && decrease_ok,
    })
}

/// Whether `x_hat` is an acceptable approximate minimizer of `model`.
///
/// One Hessian-vector product.
pub fn inexactness_check(
    model: &QuadraticModel<'_>,
    x_hat: &Vector,
    eta: f64,
    tau: f64,
    mode: InexactnessMode,
    zeta: f64,
    tel: &mut Telemetry,
) -> Result<InexactnessDiagnostics> {
    let f_norm2 = residual(model.x_ref(), model.g_ref(), tau, model.mu())?.norm();
    let point = model.evaluate_point(x_hat, tel)?;
    inexactness_at(model, &point, eta, f_norm2, tau, mode, zeta)
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub x_next: Vector,
    pub phi_next: f64,
    pub smooth_next: f64,
    pub trials: usize,
}

/// Backtracks from `alpha = 1` until
/// `phi(x_k) - phi(x_k + alpha d) >= theta (l_k(x_k) - l_k(x_k + alpha d))`.
///
/// Each trial costs one function evaluation; gradients are not touched.
pub fn outer_line_search(
    problem: &CompositeProblem,
    model: &QuadraticModel<'_>,
    d: &Vector,
    theta: f64,
    backtrack_factor: f64,
    tel: &mut Telemetry,
) -> Result<LineSearchOutcome> {
    crate::error::check_dim("direction", d.len(), model.dim())?;
    if d.iter().all(|&di| di == 0.0) {
        return Err(SqaError::Contract("line search needs a nonzero direction".into()));
    }
    let x = model.x_ref();
    let mu = problem.mu();
    let phi = model.value_at_reference();
    let slope = model.g_ref().dot(d);
    let mut alpha = 1.0;
    let mut trials = 0;
    while alpha >= MIN_OUTER_STEP {
        let trial = x + d * alpha;
        trials += 1;
        tel.fg_evaluations += 1;
        let smooth = problem.smooth().value(&trial);
        if smooth.is_finite() {
            let phi_trial = smooth + mu * l1_norm(&trial);
            let linear_trial = model.f_ref() + alpha * slope + mu * l1_norm(&trial);
            // rounding slack keeps steps alive once the decrease is below eps |phi|
            if phi - phi_trial + value_slack(phi) >= theta * (phi - linear_trial) {
                return Ok(LineSearchOutcome {
                    alpha,
                    x_next: trial,
                    phi_next: phi_trial,
                    smooth_next: smooth,
                    trials,
                });
            }
        }
        alpha *= backtrack_factor;
    }
    Err(SqaError::LineSearch {
        iteration: 0,
        min_step: MIN_OUTER_STEP,
    })
}

/// Everything an auditor needs about one accepted outer step.
pub struct StepAudit<'a> {
    pub k: usize,
    pub x_k: &'a Vector,
    pub model: &'a QuadraticModel<'a>,
    pub x_hat: &'a Vector,
    pub eta: f64,
    /// `||F(x_k)||_2`.
    pub f_norm2: f64,
    pub inner: &'a InnerResult,
    pub alpha: f64,
    pub x_next: &'a Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub solution: Vector,
    pub report: ConvergenceReport,
    pub telemetry: Telemetry,
}

struct Clock(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Clock {
    fn start() -> Self {
        Clock(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

fn evaluate_start(problem: &CompositeProblem, tel: &mut Telemetry) -> Result<EvaluatedPoint> {
    let x0 = problem.smooth().initial_point();
    problem
        .evaluate(&x0, tel)?
        .ok_or_else(|| SqaError::Domain("initial point outside the domain".into()))
}

fn report(
    status: RunStatus,
    outer: usize,
    tel: &Telemetry,
    clock: &Clock,
    final_residual_inf: f64,
    trace: Vec<TraceEntry>,
) -> ConvergenceReport {
    ConvergenceReport {
        status,
        outer_iterations: outer,
        inner_iterations: tel.inner_iterations,
        fg_evaluations: tel.fg_evaluations,
        hess_vec_products: tel.hess_vec_products,
        wall_time_seconds: clock.seconds(),
        final_residual_inf,
        trace,
    }
}

/// Inexact successive quadratic approximation from the problem's initial point.
pub fn sqa_solve(
    problem: &CompositeProblem,
    config: &SolverConfig,
    source: HessianSource,
) -> Result<SolveOutcome> {
    sqa_solve_with_observer(problem, config, source, &mut |_| {})
}

pub fn sqa_solve_with_observer(
    problem: &CompositeProblem,
    config: &SolverConfig,
    source: HessianSource,
    observer: &mut dyn FnMut(&StepAudit<'_>),
) -> Result<SolveOutcome> {
    config.validate()?;
    if source == HessianSource::Lbfgs && config.inner_solver == InnerSolverKind::ObmCg {
        return Err(SqaError::Contract(
            "the CG variant needs the exact Hessian; use the quasi-Newton variant".into(),
        ));
    }
    let clock = Clock::start();
    let (tau, mu) = (config.tau, problem.mu());
    let mut tel = Telemetry::default();
    let mut store = LbfgsStore::new(problem.dim(), config.lbfgs_memory);
    let mut current = evaluate_start(problem, &mut tel)?;
    let mut f_res = residual(&current.x, &current.gradient, tau, mu)?;
    let mut trace = vec![TraceEntry {
        k: 0,
        phi: current.value,
        residual_inf: inf_norm(&f_res),
        alpha: 0.0,
        inner_iterations: 0,
        eta: 0.0,
    }];

    let mut k = 0;
    while !is_optimal(&f_res, config.tol_inf) {
        if k == config.max_outer {
            let res = inf_norm(&f_res);
            return Ok(SolveOutcome {
                solution: current.x,
                report: report(RunStatus::IterationCap, k, &tel, &clock, res, trace),
                telemetry: tel,
            });
        }
        k += 1;
        let f_norm2 = f_res.norm();
        let eta = forcing_term(config, k, f_norm2)?;

        let exact;
        let hessian: &dyn LinearOperator = match source {
            HessianSource::Exact => {
                exact = problem.smooth().hessian_at(&current.x)?;
                exact.as_ref()
            }
            HessianSource::Lbfgs => &store,
        };
        let model = QuadraticModel::new(
            current.x.clone(),
            current.gradient.clone(),
            current.smooth_value,
            mu,
            hessian,
        )?;
        let mut stop = |p: &EvaluatedPoint| {
            inexactness_at(&model, p, eta, f_norm2, tau, config.inexactness_mode, config.zeta)
                .map(|d| d.satisfied)
                .unwrap_or(false)
        };
        let inner = match config.inner_solver {
            InnerSolverKind::Fista => {
                fista_inner(&model, &current.x, tau, &mut stop, config.max_inner, &mut tel)?
            }
            InnerSolverKind::ObmCg | InnerSolverKind::ObmQn => {
                let variant = if config.inner_solver == InnerSolverKind::ObmCg {
                    ObmVariant::Cg
                } else {
                    ObmVariant::Qn
                };
                let opts = ObmOptions {
                    variant,
                    outer_k: k,
                    max_iter: config.max_inner,
                    cg_cap: None,
                    tau,
                };
                let store_ref = (variant == ObmVariant::Qn).then_some(&store);
                obm_solve(&model, &current.x, &mut stop, store_ref, opts, &mut |_| {}, &mut tel)?
            }
        };
        tel.inner_iterations += inner.inner_iterations;
        let d = &inner.solution - &current.x;
        // a non-converged inner solve is still usable if it decreased the model
        if inner.status != InnerStatus::Converged && !(inner.model_decrease > 0.0) {
            return Err(SqaError::InnerFailure { iteration: k });
        }
        if d.iter().all(|&di| di == 0.0) {
            return Err(SqaError::InnerFailure { iteration: k });
        }
        let ls = outer_line_search(problem, &model, &d, config.theta, config.backtrack_factor, &mut tel)
            .map_err(|e| match e {
                SqaError::LineSearch { min_step, .. } => SqaError::LineSearch {
                    iteration: k,
                    min_step,
                },
                other => other,
            })?;
        observer(&StepAudit {
            k,
            x_k: &current.x,
            model: &model,
            x_hat: &inner.solution,
            eta,
            f_norm2,
            inner: &inner,
            alpha: ls.alpha,
            x_next: &ls.x_next,
        });
        drop(model);

        let gradient = problem.smooth().gradient(&ls.x_next)?;
        let next = EvaluatedPoint {
            x: ls.x_next,
            smooth_value: ls.smooth_next,
            gradient,
            value: ls.phi_next,
        };
        if source == HessianSource::Lbfgs {
            let s = &next.x - &current.x;
            let y = &next.gradient - &current.gradient;
            if store.update(&s, &y)? == LbfgsUpdate::Skipped {
                tel.lbfgs_skips += 1;
            }
        }
        current = next;
        f_res = residual(&current.x, &current.gradient, tau, mu)?;
        trace.push(TraceEntry {
            k,
            phi: current.value,
            residual_inf: inf_norm(&f_res),
            alpha: ls.alpha,
            inner_iterations: inner.inner_iterations,
            eta,
        });
    }
    let res = inf_norm(&f_res);
    Ok(SolveOutcome {
        solution: current.x,
        report: report(RunStatus::Converged, k, &tel, &clock, res, trace),
        telemetry: tel,
    })
}

/// FISTA applied directly to the composite objective.
///
/// Every trace entry is one FISTA iteration; `alpha` is the step `1/L` in
/// use at that iteration.
pub fn fista_baseline_solve(problem: &CompositeProblem, config: &SolverConfig) -> Result<SolveOutcome> {
    config.validate()?;
    let clock = Clock::start();
    let (tau, mu) = (config.tau, problem.mu());
    let mut tel = Telemetry::default();
    let x0 = problem.smooth().initial_point();
    let mut trace = Vec::new();
    let mut last_residual = f64::INFINITY;
    let mut stop = |p: &EvaluatedPoint| {
        let r = point_residual(p, tau, mu).map(|r| inf_norm(&r)).unwrap_or(f64::INFINITY);
        last_residual = r;
        trace.push(TraceEntry {
            k: trace.len(),
            phi: p.value,
            residual_inf: r,
            alpha: 0.0,
            inner_iterations: 0,
            eta: 0.0,
        });
        r <= config.tol_inf
    };
    let out = fista_composite(problem, &x0, &mut stop, config.max_outer, &mut tel)?;
    let status = match out.status {
        InnerStatus::Converged => RunStatus::Converged,
        InnerStatus::IterationCap => RunStatus::IterationCap,
        InnerStatus::Stalled => {
            return Err(SqaError::InnerFailure {
                iteration: out.iterations,
            })
        }
    };
    let report = report(status, out.iterations, &tel, &clock, last_residual, trace);
    Ok(SolveOutcome {
        solution: out.point.x,
        report,
        telemetry: tel,
    })
}

/// Runs one of the four end-to-end methods.
pub fn solve(problem: &CompositeProblem, kind: SolverKind, config: &SolverConfig) -> Result<SolveOutcome> {
    match kind.sqa_parts() {
        None => fista_baseline_solve(problem, config),
        Some((inner, source)) => {
            let config = SolverConfig {
                inner_solver: inner,
                ..config.clone()
            };
            sqa_solve(problem, &config, source)
        }
    }
}
