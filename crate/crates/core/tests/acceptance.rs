//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqa::driver::{fista_baseline_solve, sqa_solve_with_observer};
use sqa::inner::{cg_budget, obm_solve, LbfgsStore, ObmOptions, ObmVariant, OrthantFace};
use sqa::io::{
    parse_svmlight, read_report_json, render_report, sample_covariance, write_svmlight,
    ProblemKind, ReportFormat, RunSpec,
};
use sqa::model::{
    eigen_bounds, materialize, AnalysisConstants, DenseOperator, EtaRule,
    EvaluatedPoint, HessianSource, InexactnessMode, LinearOperator, QuadraticModel, RunStatus,
    SmoothFunction, Telemetry,
};
use sqa::objectives::{
    gaussian_samples, synthetic_logistic, synthetic_quadratic, CovarianceProblem, CsrMatrix,
    LogisticDataset, SyntheticQuadratic,
};
use sqa::prox::{ista_point, point_residual, residual, subproblem_residual};
use sqa::{solve, CompositeProblem, SolveOutcome, SolverConfig, SolverKind, Vector};

const RESIDUAL_IDENTITY_TOL: f64 = 1e-10;
const GRADIENT_REL_TOL: f64 = 1e-5;
const HESS_VEC_REL_TOL: f64 = 1e-4;
const KRONECKER_TOL: f64 = 1e-10;
const OPTIMALITY_TOL: f64 = 1e-5;
const AGREEMENT_TOL: f64 = 1e-4;
const UNIT_STEP_FRACTION: f64 = 0.95;
const HALF_DECREASE_SLACK: f64 = 1e-10;
const REDUCED_SOLVE_TOL: f64 = 1e-8;
const MAX_OUTER: usize = 3000;

const QUAD_N: usize = 100;
const QUAD_CONDITION: f64 = 1e4;
const QUAD_SEED: u64 = 1;
const LOGISTIC_SAMPLES: usize = 200;
const LOGISTIC_FEATURES: usize = 50;
const LOGISTIC_SEED: u64 = 2;
const LOGISTIC_MU: f64 = 0.05;
const COV_P: usize = 20;
const COV_SAMPLES: usize = 50;
const COV_MU: f64 = 0.5;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn quad_instance() -> SyntheticQuadratic {
    synthetic_quadratic(QUAD_N, QUAD_CONDITION, QUAD_SEED).unwrap()
}

fn quad_problem() -> CompositeProblem {
    let q = quad_instance();
    let mu = q.median_mu();
    CompositeProblem::new(Box::new(q), mu).unwrap()
}

fn logistic_problem() -> CompositeProblem {
    let d = synthetic_logistic(LOGISTIC_SAMPLES, LOGISTIC_FEATURES, LOGISTIC_SEED).unwrap();
    CompositeProblem::new(Box::new(d), LOGISTIC_MU).unwrap()
}

fn covariance_instance() -> CovarianceProblem {
    // AR(1) correlation 0.8 so the estimate has off-diagonal structure at mu = 0.5
    let sigma = DMatrix::from_fn(COV_P, COV_P, |i, j| 0.8f64.powi((i as i32 - j as i32).abs()));
    let l = sigma.cholesky().unwrap().l();
    sample_covariance(&(gaussian_samples(COV_SAMPLES, COV_P, 3) * l.transpose())).unwrap()
}

/// Per-step record collected from a solver run.
struct Step {
    k: usize,
    alpha: f64,
    eta: f64,
    f_norm2: f64,
    linear_decrease: f64,
    step_norm: f64,
    lambda_min: f64,
    lambda_max: f64,
    x_next: Vector,
}

fn run_recorded(
    problem: &CompositeProblem,
    kind: SolverKind,
    config: &SolverConfig,
    eigen: bool,
) -> (SolveOutcome, Vec<Step>) {
    let Some((inner, source)) = kind.sqa_parts() else {
        return (fista_baseline_solve(problem, config).unwrap(), Vec::new());
    };
    let config = SolverConfig {
        inner_solver: inner,
        ..config.clone()
    };
    let mut steps = Vec::new();
    let out = sqa_solve_with_observer(problem, &config, source, &mut |a| {
        let m = a.model;
        let (lambda_min, lambda_max) = if eigen {
            eigen_bounds(&materialize(m.hessian()))
        } else {
            (f64::NAN, f64::NAN)
        };
        steps.push(Step {
            k: a.k,
            alpha: a.alpha,
            eta: a.eta,
            f_norm2: a.f_norm2,
            linear_decrease: m.value_at_reference() - m.linear_value(a.x_hat).unwrap(),
            step_norm: (a.x_hat - a.x_k).norm(),
            lambda_min,
            lambda_max,
            x_next: a.x_next.clone(),
        });
    })
    .unwrap();
    (out, steps)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for tau in [0.1, 0.5, 0.9] {
        for mu in [0.0, 0.5, 2.0] {
            for _ in 0..1000 {
                let x = Vector::from_fn(8, |_, _| rng.random_range(-3.0..3.0));
                let g = Vector::from_fn(8, |_, _| rng.random_range(-3.0..3.0));
                let f = residual(&x, &g, tau, mu).unwrap();
                let step = (ista_point(&x, &g, tau, mu).unwrap() - &x).norm();
                worst = worst.max((tau * f.norm() - step).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= RESIDUAL_IDENTITY_TOL && secs < 1.0,
        format!("max deviation {worst:.2e} over 9000 pairs, {secs:.3} s"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 20;
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let raw = &b * b.transpose() + DMatrix::identity(n, n) * 0.05;
    let (_, top) = eigen_bounds(&raw);
    let tau = 0.5;
    // scale so that tau ||H|| = 0.95
    let h = raw * (0.95 / (tau * top));
    let (lambda, _) = eigen_bounds(&h);
    let op = DenseOperator(h);
    let mut violations = 0;
    let mut tel = Telemetry::default();
    for _ in 0..10_000 {
        let x = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let g = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let mu = rng.random_range(0.0..2.0);
        let model = QuadraticModel::new(x, g, 0.0, mu, &op).unwrap();
        let y = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let z = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let fy = subproblem_residual(&model, &y, tau, &mut tel).unwrap();
        let fz = subproblem_residual(&model, &z, tau, &mut tel).unwrap();
        let w = &z - &y;
        let lhs = w.dot(&(fz - fy));
        let rhs = 0.5 * lambda * w.norm_squared();
        if lhs < rhs - 1e-12 * rhs.abs().max(1.0) {
            violations += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        violations == 0 && secs < 5.0,
        format!("{violations} violations in 10000 pairs, lambda {lambda:.3e}, {secs:.2} s"),
    )
}

fn rel(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn fd_gradient(f: &dyn SmoothFunction, x: &Vector, h: f64) -> Vector {
    Vector::from_fn(x.len(), |i, _| {
        let mut e = Vector::zeros(x.len());
        e[i] = h;
        (f.value(&(x + &e)) - f.value(&(x - &e))) / (2.0 * h)
    })
}

fn fd_hess_vec(f: &dyn SmoothFunction, x: &Vector, v: &Vector, h: f64) -> Vector {
    (f.gradient(&(x + v * h)).unwrap() - f.gradient(&(x - v * h)).unwrap()) / (2.0 * h)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst_g = 0.0f64;
    let mut worst_h = 0.0f64;

    let logistic = synthetic_logistic(60, 12, 5).unwrap();
    for _ in 0..5 {
        let x = Vector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        let v = Vector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        worst_g = worst_g.max(rel(&fd_gradient(&logistic, &x, 1e-6), &logistic.gradient(&x).unwrap()));
        worst_h = worst_h.max(rel(&fd_hess_vec(&logistic, &x, &v, 1e-5), &logistic.hess_vec(&x, &v).unwrap()));
    }

    let p = 4;
    let cov = CovarianceProblem::new(sample_covariance(&gaussian_samples(30, p, 6)).unwrap().sample_cov().clone()).unwrap();
    for _ in 0..5 {
        let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-0.5..0.5));
        let pm = &b * b.transpose() + DMatrix::identity(p, p);
        let x = CovarianceProblem::flatten(&pm);
        let vm = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let v = CovarianceProblem::flatten(&((&vm + vm.transpose()) * 0.5));
        worst_g = worst_g.max(rel(&fd_gradient(&cov, &x, 1e-6), &cov.gradient(&x).unwrap()));
        worst_h = worst_h.max(rel(&fd_hess_vec(&cov, &x, &v, 1e-5), &cov.hess_vec(&x, &v).unwrap()));
    }

    // explicit Kronecker action for p = 3
    let p = 3;
    let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-0.5..0.5));
    let pm = &b * b.transpose() + DMatrix::identity(p, p);
    let inv = pm.clone().try_inverse().unwrap();
    let kron = inv.kronecker(&inv);
    let cov3 = CovarianceProblem::new(DMatrix::identity(p, p)).unwrap();
    let vm = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    let v = CovarianceProblem::flatten(&((&vm + vm.transpose()) * 0.5));
    let kron_dev = (&kron * &v - cov3.hess_vec(&CovarianceProblem::flatten(&pm), &v).unwrap()).amax();

    check(
        worst_g <= GRADIENT_REL_TOL && worst_h <= HESS_VEC_REL_TOL && kron_dev <= KRONECKER_TOL,
        format!("gradient rel {worst_g:.2e}, hess-vec rel {worst_h:.2e}, kronecker {kron_dev:.2e}"),
    )
}

struct Criterion4 {
    outcome: Outcome,
    /// (instance, solver, steps) for every SQA run.
    sqa_steps: Vec<(&'static str, SolverKind, Vec<Step>)>,
}

fn criterion_4() -> Criterion4 {
    let start = Instant::now();
    let config = SolverConfig::default();
    let mut failures = Vec::new();
    let mut sqa_steps = Vec::new();
    let mut details = Vec::new();
    let instances: [(&'static str, fn() -> CompositeProblem); 2] =
        [("quadratic", quad_problem), ("logistic", logistic_problem)];
    for (name, make) in instances {
        let problem = make();
        let mut solutions = Vec::new();
        for kind in SolverKind::ALL {
            let exact = kind.sqa_parts().is_some_and(|(_, s)| s == HessianSource::Exact);
            let (out, steps) = run_recorded(&problem, kind, &config, exact);
            let r = &out.report;
            if r.status != RunStatus::Converged || r.final_residual_inf > OPTIMALITY_TOL || r.outer_iterations > MAX_OUTER {
                failures.push(format!("{name}/{} did not converge", kind.name()));
            }
            if !r.trace.windows(2).all(|w| w[1].phi < w[0].phi) {
                failures.push(format!("{name}/{} objective not strictly decreasing", kind.name()));
            }
            details.push(format!("{}:{}", kind.name(), r.outer_iterations));
            solutions.push((kind, out.solution));
            if kind != SolverKind::Fista {
                sqa_steps.push((name, kind, steps));
            }
        }
        let mut worst = 0.0f64;
        for i in 0..solutions.len() {
            for j in i + 1..solutions.len() {
                worst = worst.max((&solutions[i].1 - &solutions[j].1).norm());
            }
        }
        if worst > AGREEMENT_TOL {
            failures.push(format!("{name} pairwise distance {worst:.2e}"));
        }
        details.push(format!("{name} max distance {worst:.2e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 30.0 {
        failures.push(format!("runtime {secs:.1} s"));
    }
    let detail = format!("{}; {secs:.2} s", details.join(", "));
    Criterion4 {
        outcome: if failures.is_empty() {
            Ok(detail)
        } else {
            Err(format!("{}; {detail}", failures.join("; ")))
        },
        sqa_steps,
    }
}

fn criterion_5(runs: &[(&'static str, SolverKind, Vec<Step>)], tau: f64) -> Outcome {
    let mut checked = 0;
    let mut gamma_violations = 0;
    let mut linear_violations = 0;
    for (_, kind, steps) in runs {
        if kind.sqa_parts().map(|(_, s)| s) != Some(HessianSource::Exact) {
            continue;
        }
        for s in steps {
            let consts = AnalysisConstants {
                lambda_min: s.lambda_min,
                lambda_max: s.lambda_max,
                lipschitz_m: f64::NAN,
            };
            let gamma = consts.gamma(s.eta, tau);
            checked += 1;
            if s.linear_decrease < gamma * s.f_norm2 * s.f_norm2 {
                gamma_violations += 1;
            }
            if s.linear_decrease <= 0.5 * s.lambda_min * s.step_norm * s.step_norm {
                linear_violations += 1;
            }
        }
    }
    check(
        checked > 0 && gamma_violations == 0 && linear_violations == 0,
        format!(
            "{checked} accepted steps, {gamma_violations} decrease-bound and {linear_violations} model-vs-linear violations"
        ),
    )
}

fn criterion_6(runs: &[(&'static str, SolverKind, Vec<Step>)]) -> Outcome {
    let config = SolverConfig {
        zeta: 0.25,
        inexactness_mode: InexactnessMode::Strengthened,
        ..SolverConfig::default()
    };
    let problem = logistic_problem();
    let mut late_backtracks = Vec::new();
    for kind in [SolverKind::SqaFista, SolverKind::SqaObmCg] {
        let (_, steps) = run_recorded(&problem, kind, &config, false);
        for s in steps.iter().filter(|s| s.k >= 4 && s.alpha != 1.0) {
            late_backtracks.push(format!("{} k={} alpha={}", kind.name(), s.k, s.alpha));
        }
    }
    let total: usize = runs.iter().map(|r| r.2.len()).sum();
    let unit: usize = runs.iter().map(|r| r.2.iter().filter(|s| s.alpha == 1.0).count()).sum();
    let fraction = unit as f64 / total as f64;
    check(
        late_backtracks.is_empty() && fraction >= UNIT_STEP_FRACTION,
        format!(
            "unit steps for k >= 4 {}; pooled unit fraction {unit}/{total} = {fraction:.3}",
            if late_backtracks.is_empty() { "on every step".to_string() } else { late_backtracks.join(", ") }
        ),
    )
}

fn error_history(eta_rule: EtaRule, reference: &Vector) -> Vec<f64> {
    let config = SolverConfig {
        eta_rule,
        tol_inf: 1e-8,
        ..SolverConfig::default()
    };
    let (out, steps) = run_recorded(&logistic_problem(), SolverKind::SqaFista, &config, false);
    let _ = out;
    // the run starts from the origin
    let mut errors = vec![reference.norm()];
    errors.extend(steps.iter().map(|s| (&s.x_next - reference).norm()));
    errors
}

fn ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| w[1] / w[0]).collect()
}

fn criterion_7() -> Outcome {
    let reference_config = SolverConfig {
        eta_rule: EtaRule::Constant(1e-3),
        tol_inf: 1e-12,
        ..SolverConfig::default()
    };
    let reference = solve(&logistic_problem(), SolverKind::SqaObmCg, &reference_config)
        .unwrap()
        .solution;

    let constant = error_history(EtaRule::Constant(0.5), &reference);
    let harmonic = error_history(EtaRule::Harmonic, &reference);
    let quadratic = error_history(EtaRule::Residual, &reference);
    let (rc, rp, rq) = (ratios(&constant), ratios(&harmonic), ratios(&quadratic));
    let mut failures = Vec::new();

    let tail: Vec<f64> = rc.iter().rev().take(5).copied().collect();
    let tail_max = tail.iter().copied().fold(0.0, f64::max);
    if tail.len() < 5 || tail_max >= 1.0 {
        failures.push(format!("(a) final ratios {tail:?}"));
    }

    // for k >= 3 the harmonic rule uses eta < 0.5; compare against the constant
    // run's ratio at the nearest error level
    let mut worse = 0;
    for (i, r) in rp.iter().enumerate().skip(2) {
        let e = harmonic[i];
        let j = (0..rc.len())
            .min_by(|&a, &b| (constant[a].ln() - e.ln()).abs().total_cmp(&(constant[b].ln() - e.ln()).abs()))
            .unwrap();
        if *r >= rc[j] {
            worse += 1;
        }
    }
    if worse > 0 {
        failures.push(format!("(b) {worse} harmonic-rule ratios not below the constant run"));
    }

    let n = rq.len();
    let last = rq.last().copied().unwrap_or(f64::INFINITY);
    if n < 3 || last > 0.1 || !(rq[n - 1] < rq[n - 2] && rq[n - 2] < rq[n - 3]) {
        failures.push(format!("(c) ratios {rq:?}"));
    }
    let fmt = |r: &[f64]| r.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ");
    let detail = format!(
        "(a) tail max {tail_max:.3}; (b) [{}]; (c) [{}]",
        fmt(&rp),
        fmt(&rq)
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * 0.2
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut worst = f64::INFINITY;
    let mut unsolved = 0;
    for _ in 0..20 {
        let n = rng.random_range(3..9);
        let op = DenseOperator(random_spd(n, &mut rng));
        let x = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let g = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let mu = rng.random_range(0.1..1.0);
        let model = QuadraticModel::new(x.clone(), g, 0.7, mu, &op).unwrap();
        let mut tel = Telemetry::default();
        let mut stop = |p: &EvaluatedPoint| point_residual(p, 0.5, mu).unwrap().norm() <= 1e-12;
        let opts = ObmOptions {
            variant: ObmVariant::Cg,
            outer_k: 0,
            max_iter: 10_000,
            cg_cap: Some(4 * n),
            tau: 0.5,
        };
        let out = obm_solve(&model, &x, &mut stop, None, opts, &mut |_| {}, &mut tel).unwrap();
        if out.residual_norm > 1e-12 {
            unsolved += 1;
        }
        let q_drop = model.value_at_reference() - out.point.value;
        let l_drop = model.value_at_reference() - model.linear_value(&out.solution).unwrap();
        worst = worst.min(q_drop - 0.5 * l_drop);
    }
    check(
        unsolved == 0 && worst >= -HALF_DECREASE_SLACK,
        format!("20 models, min q-drop minus half l-drop {worst:.3e}, {unsolved} not solved to 1e-12"),
    )
}

fn criterion_9() -> Outcome {
    let mut failures = Vec::new();

    // conformance and budgets along full CG runs: replay each outer model
    let mut nonconforming = 0;
    let mut iterates = 0;
    let mut wrong_budget = 0;
    let mut outer = 0;
    let config = SolverConfig {
        inner_solver: sqa::InnerSolverKind::ObmCg,
        ..SolverConfig::default()
    };
    // the under-scaled Hessian forces enough outer iterations to reach every budget
    let slow = synthetic_quadratic(30, 1e3, 102).unwrap();
    let slow_mu = slow.median_mu();
    let slow = CompositeProblem::new(Box::new(ScaledHessian { inner: slow, scale: 0.3 }), slow_mu).unwrap();
    let mut budgets_seen = std::collections::BTreeSet::new();
    for problem in [quad_problem(), logistic_problem(), slow] {
        sqa_solve_with_observer(&problem, &config, HessianSource::Exact, &mut |a| {
            outer += 1;
            budgets_seen.extend(a.inner.cg_cap);
            if a.inner.cg_cap != Some(cg_budget(a.k)) {
                wrong_budget += 1;
            }
            let f_norm2 = a.f_norm2;
            let mut stop = |p: &EvaluatedPoint| point_residual(p, 0.5, a.model.mu()).unwrap().norm() <= 0.1 * f_norm2;
            let opts = ObmOptions {
                variant: ObmVariant::Cg,
                outer_k: a.k,
                max_iter: 10_000,
                cg_cap: None,
                tau: 0.5,
            };
            let mut observer = |s: &sqa::inner::ObmStep<'_>| {
                iterates += 1;
                if !s.safeguard && !s.face.contains(s.iterate) {
                    nonconforming += 1;
                }
            };
            let mut tel = Telemetry::default();
            obm_solve(a.model, a.x_k, &mut stop, None, opts, &mut observer, &mut tel).unwrap();
        })
        .unwrap();
    }
    let budgets_ok = (0..10).all(|k| cg_budget(k) == 1)
        && (10..20).all(|k| cg_budget(k) == 2)
        && (20..200).all(|k| cg_budget(k) == 3);
    if nonconforming > 0 || wrong_budget > 0 || !budgets_ok || budgets_seen.len() != 3 {
        failures.push(format!("{nonconforming} nonconforming iterates, {wrong_budget} wrong budgets"));
    }

    // quasi-Newton variant on a random store
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let n = 12;
    let a = random_spd(n, &mut rng);
    let mut store = LbfgsStore::new(n, 5);
    for _ in 0..7 {
        let s = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        store.update(&s, &(&a * &s)).unwrap();
    }
    let g = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let model = QuadraticModel::new(Vector::zeros(n), g, 0.0, 0.6, &store).unwrap();
    let mut qn_bad = 0;
    let mut stop = |p: &EvaluatedPoint| point_residual(p, 0.5, 0.6).unwrap().norm() <= 1e-10;
    let opts = ObmOptions {
        variant: ObmVariant::Qn,
        outer_k: 0,
        max_iter: 10_000,
        cg_cap: None,
        tau: 0.5,
    };
    let mut tel = Telemetry::default();
    obm_solve(&model, &Vector::zeros(n), &mut stop, Some(&store), opts, &mut |s| {
        iterates += 1;
        if !s.safeguard && !s.face.contains(s.iterate) {
            qn_bad += 1;
        }
    }, &mut tel)
    .unwrap();
    if qn_bad > 0 {
        failures.push(format!("{qn_bad} nonconforming quasi-Newton iterates"));
    }

    // reduced L-BFGS solve against dense assembly, n = 8, m = 3
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = 8;
        let a = random_spd(n, &mut rng);
        let mut store = LbfgsStore::new(n, 3);
        for _ in 0..5 {
            let s = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            store.update(&s, &(&a * &s)).unwrap();
        }
        let omega: Vec<i8> = (0..n).map(|i| if i == trial % n { 1 } else { [-1, 0, 1][rng.random_range(0..3)] }).collect();
        let face = OrthantFace::new(omega);
        let v = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let (d, fallback) = store.reduced_inverse_solve(&face, &v).unwrap();
        let dense = materialize(&store);
        let free: Vec<usize> = (0..n).filter(|&i| face.is_free(i)).collect();
        let bff = DMatrix::from_fn(free.len(), free.len(), |p, q| dense[(free[p], free[q])]);
        let vf = Vector::from_fn(free.len(), |p, _| -v[free[p]]);
        let df = bff.lu().solve(&vf).unwrap();
        let mut expected = Vector::zeros(n);
        for (p, &i) in free.iter().enumerate() {
            expected[i] = df[p];
        }
        if fallback {
            failures.push("reduced solve fell back".into());
        }
        worst = worst.max((&d - &expected).norm() / expected.norm().max(1.0));
    }
    if worst > REDUCED_SOLVE_TOL {
        failures.push(format!("reduced solve deviation {worst:.2e}"));
    }
    let detail = format!(
        "{iterates} inner iterates over {outer} outer models checked, budgets used {budgets_seen:?}, reduced solve deviation {worst:.2e}"
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let cov = covariance_instance();
    let problem = CompositeProblem::new(Box::new(cov.clone()), COV_MU).unwrap();
    let config = SolverConfig::default();
    let (out, steps) = run_recorded(&problem, SolverKind::SqaObmCg, &config, false);
    let not_pd = steps
        .iter()
        .filter(|s| cov.unflatten(&s.x_next).unwrap().cholesky().is_none())
        .count();
    let baseline = fista_baseline_solve(&problem, &config).unwrap();
    let distance = (&out.solution - &baseline.solution).norm();
    let nnz = out.solution.iter().filter(|v| **v != 0.0).count();
    let secs = start.elapsed().as_secs_f64();
    check(
        out.report.status == RunStatus::Converged
            && out.report.final_residual_inf <= OPTIMALITY_TOL
            && not_pd == 0
            && baseline.report.status == RunStatus::Converged
            && distance <= AGREEMENT_TOL
            && secs < 60.0,
        format!(
            "{} outer iterations, residual {:.2e}, {not_pd} non-PD iterates, {nnz} nonzeros, distance to baseline {distance:.2e}, {secs:.2} s",
            out.report.outer_iterations, out.report.final_residual_inf
        ),
    )
}

/// A quadratic whose reported Hessian is a scaled copy of the true one.
struct ScaledHessian {
    inner: SyntheticQuadratic,
    scale: f64,
}

impl SmoothFunction for ScaledHessian {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &Vector) -> f64 {
        self.inner.value(x)
    }

    fn gradient(&self, x: &Vector) -> sqa::Result<Vector> {
        self.inner.gradient(x)
    }

    fn hess_vec(&self, x: &Vector, v: &Vector) -> sqa::Result<Vector> {
        Ok(self.inner.hess_vec(x, v)? * self.scale)
    }

    fn hessian_at<'a>(&'a self, _x: &Vector) -> sqa::Result<Box<dyn LinearOperator + 'a>> {
        Ok(Box::new(DenseOperator(&self.inner.a * self.scale)))
    }
}

fn criterion_11() -> Outcome {
    let config = SolverConfig::default();
    let mut checked = 0;
    let mut backtracked = 0;
    let mut below = Vec::new();
    for (i, condition) in [10.0, 100.0, 1e3, 1e4].into_iter().enumerate() {
        let q = synthetic_quadratic(30, condition, 100 + i as u64).unwrap();
        let mu = q.median_mu();
        let (_, big_m) = eigen_bounds(&q.a);
        let problems: Vec<(&str, SolverKind, CompositeProblem)> = vec![
            ("exact", SolverKind::SqaObmCg, CompositeProblem::new(Box::new(q.clone()), mu).unwrap()),
            ("lbfgs", SolverKind::SqaObmQn, CompositeProblem::new(Box::new(q.clone()), mu).unwrap()),
            (
                "scaled",
                SolverKind::SqaObmCg,
                CompositeProblem::new(Box::new(ScaledHessian { inner: q.clone(), scale: 0.3 }), mu).unwrap(),
            ),
        ];
        for (label, kind, problem) in problems {
            let (_, steps) = run_recorded(&problem, kind, &config, true);
            for s in steps {
                let consts = AnalysisConstants {
                    lambda_min: s.lambda_min,
                    lambda_max: s.lambda_max,
                    lipschitz_m: big_m,
                };
                checked += 1;
                if s.alpha < 1.0 {
                    backtracked += 1;
                }
                if s.alpha < consts.step_floor(config.theta) {
                    below.push(format!("{label} cond {condition:e} k={} alpha={}", s.k, s.alpha));
                }
            }
        }
    }
    check(
        below.is_empty() && backtracked > 0,
        format!(
            "{checked} steps, {backtracked} backtracked, {} below the floor{}",
            below.len(),
            if below.is_empty() { String::new() } else { format!(": {}", below.join(", ")) }
        ),
    )
}

fn criterion_12() -> Outcome {
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for _ in 0..40 {
        let mut row = Vec::new();
        for j in 0..30 {
            if rng.random_bool(0.3) {
                row.push((j, rng.random_range(-1e3..1e3) * 10f64.powi(rng.random_range(-8..8))));
            }
        }
        rows.push(row);
    }
    let labels: Vec<f64> = (0..40).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let data = LogisticDataset::new(CsrMatrix::from_rows(30, &rows).unwrap(), labels).unwrap();
    let path = dir.path().join("data.svm");
    write_svmlight(&data, &path).unwrap();
    let back = parse_svmlight(&path).unwrap();
    let same_values = (0..data.samples()).all(|i| {
        data.features().row(i).collect::<Vec<_>>() == back.features().row(i).collect::<Vec<_>>()
    }) && data.labels() == back.labels();
    if !same_values {
        failures.push("SVMLight round trip differs".to_string());
    }

    let spec = RunSpec {
        problem_kind: ProblemKind::Synthetic,
        data_path: None,
        mu: 0.0,
        solver: SolverKind::SqaObmQn,
        config: SolverConfig::default(),
        report_path: None,
        report_format: ReportFormat::Json,
    };
    let run = || {
        let q = synthetic_quadratic(40, 100.0, 5).unwrap();
        let spec = RunSpec { mu: q.median_mu(), ..spec.clone() };
        let problem = CompositeProblem::new(Box::new(q), spec.mu).unwrap();
        (solve(&problem, spec.solver, &spec.config).unwrap().report, spec)
    };
    let (first, spec1) = run();
    let json = render_report(&first, &spec1, ReportFormat::Json).unwrap();
    let (spec_back, report_back) = read_report_json(&json).unwrap();
    if report_back != first || spec_back != spec1 {
        failures.push("report round trip differs".to_string());
    }

    let (second, spec2) = run();
    let untimed = |mut r: sqa::ConvergenceReport| {
        r.wall_time_seconds = 0.0;
        r
    };
    for format in [ReportFormat::Json, ReportFormat::Csv] {
        let a = render_report(&untimed(first.clone()), &spec1, format).unwrap();
        let b = render_report(&untimed(second.clone()), &spec2, format).unwrap();
        if a != b {
            failures.push(format!("{format:?} reports differ between seeded runs"));
        }
    }
    let detail = format!(
        "{} samples round-tripped, report with {} trace rows",
        data.samples(),
        first.trace.len()
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

fn main() {
    let tau = SolverConfig::default().tau;
    let c4 = criterion_4();
    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "residual identity", criterion_1()),
        (2, "strong monotonicity", criterion_2()),
        (3, "oracle checks", criterion_3()),
        (4, "cross-solver agreement", c4.outcome.clone()),
        (5, "decrease-bound audit", criterion_5(&c4.sqa_steps, tau)),
        (6, "unit-step acceptance", criterion_6(&c4.sqa_steps)),
        (7, "rate control", criterion_7()),
        (8, "exact-minimizer half-decrease", criterion_8()),
        (9, "OBM conformance and budget", criterion_9()),
        (10, "covariance desk run", criterion_10()),
        (11, "line-search floor", criterion_11()),
        (12, "I/O round trips and determinism", criterion_12()),
    ];
    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {id:>2} {name:<32} PASS  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} {name:<32} FAIL  {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
