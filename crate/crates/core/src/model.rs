//! Problem abstraction, the per-iteration quadratic model, solver
//! configuration and run telemetry.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SqaError};
use crate::Vector;

/// A symmetric linear map `v -> H v`, never materialized by the solvers.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &Vector) -> Vector;
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, v: &Vector) -> Vector {
        (**self).apply(v)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, v: &Vector) -> Vector {
        (**self).apply(v)
    }
}

/// Explicit matrix operator. Used by tests and small analysis harnesses.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, v: &Vector) -> Vector {
        &self.0 * v
    }
}

/// Hessian-vector products at a fixed point, backed by the oracle itself.
struct PointHessian<'a, F: SmoothFunction + ?Sized> {
    oracle: &'a F,
    at: Vector,
}

impl<F: SmoothFunction + ?Sized> LinearOperator for PointHessian<'_, F> {
    fn dim(&self) -> usize {
        self.oracle.dim()
    }

    fn apply(&self, v: &Vector) -> Vector {
        self.oracle
            .hess_vec(&self.at, v)
            .expect("hessian requested at a point outside the domain")
    }
}

/// Smooth convex part `f` of the composite objective.
///
/// `value` returns `+inf` outside the domain; `gradient` and `hess_vec`
/// return [`SqaError::Domain`] there.
pub trait SmoothFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Result<Vector>;
    fn hess_vec(&self, x: &Vector, v: &Vector) -> Result<Vector>;

    /// Hessian operator frozen at `x`. Implementations may cache whatever
    /// makes repeated products cheap.
    fn hessian_at<'a>(&'a self, x: &Vector) -> Result<Box<dyn LinearOperator + 'a>> {
        check_dim("hessian point", x.len(), self.dim())?;
        if !self.value(x).is_finite() {
            return Err(SqaError::Domain("hessian requested outside the domain".into()));
        }
        Ok(Box::new(PointHessian {
            oracle: self,
            at: x.clone(),
        }))
    }

    /// Starting point of the outer iteration. Zero unless the function is
    /// undefined there.
    fn initial_point(&self) -> Vector {
        Vector::zeros(self.dim())
    }
}

/// `phi(x) = f(x) + mu * ||x||_1`.
pub struct CompositeProblem {
    smooth: Box<dyn SmoothFunction>,
    mu: f64,
}

impl CompositeProblem {
    pub fn new(smooth: Box<dyn SmoothFunction>, mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(SqaError::Contract(format!(
                "regularization weight must be finite and nonnegative, got {mu}"
            )));
        }
        if smooth.dim() == 0 {
            return Err(SqaError::Contract("problem dimension must be positive".into()));
        }
        Ok(Self { smooth, mu })
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn smooth(&self) -> &dyn SmoothFunction {
        self.smooth.as_ref()
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        self.smooth.value(x) + self.mu * l1_norm(x)
    }
}

/// Per-run counters. Owned by the driver and threaded through every call that
/// touches an oracle.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Telemetry {
    pub fg_evaluations: usize,
    pub hess_vec_products: usize,
    pub inner_iterations: usize,
    pub lbfgs_skips: usize,
    pub reduced_solve_fallbacks: usize,
    pub safeguard_steps: usize,
}

/// A point together with its smooth value, smooth gradient and full
/// composite value (`smooth + mu * ||x||_1`).
#[derive(Debug, Clone)]
pub struct EvaluatedPoint {
    pub x: Vector,
    pub smooth_value: f64,
    pub gradient: Vector,
    pub value: f64,
}

/// Something a proximal-gradient method can be run on: a smooth part with a
/// gradient plus an implicit `mu * ||x||_1`.
pub trait SmoothPart {
    fn dim(&self) -> usize;
    fn mu(&self) -> f64;

    /// `None` when `x` lies outside the domain of the smooth part.
    fn evaluate(&self, x: &Vector, tel: &mut Telemetry) -> Result<Option<EvaluatedPoint>>;

    /// A lower estimate of the gradient Lipschitz constant near `at`.
    fn lipschitz_hint(&self, at: &EvaluatedPoint, tel: &mut Telemetry) -> Result<f64>;
}

impl SmoothPart for CompositeProblem {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn evaluate(&self, x: &Vector, tel: &mut Telemetry) -> Result<Option<EvaluatedPoint>> {
        check_dim("point", x.len(), self.dim())?;
        tel.fg_evaluations += 1;
        let smooth_value = self.smooth.value(x);
        if !smooth_value.is_finite() {
            return Ok(None);
        }
        let gradient = self.smooth.gradient(x)?;
        Ok(Some(EvaluatedPoint {
            x: x.clone(),
            smooth_value,
            value: smooth_value + self.mu * l1_norm(x),
            gradient,
        }))
    }

    fn lipschitz_hint(&self, at: &EvaluatedPoint, tel: &mut Telemetry) -> Result<f64> {
        let gnorm = at.gradient.norm();
        if gnorm == 0.0 {
            return Ok(1.0);
        }
        let step = 1e-4 * at.x.norm().max(1.0) / gnorm;
        let probe = &at.x - &at.gradient * step;
        Ok(match self.evaluate(&probe, tel)? {
            Some(p) => {
                let secant = (&p.gradient - &at.gradient).norm() / (step * gnorm);
                if secant.is_finite() && secant > 0.0 {
                    // a hair above the secant so exact curvature passes the bound test
                    secant * (1.0 + 1e-8)
                } else {
                    1.0
                }
            }
            None => 1.0,
        })
    }
}

/// Frozen model `q_k(x) = f_k + g_k'(x - x_k) + 0.5 (x - x_k)' H_k (x - x_k) + mu ||x||_1`.
pub struct QuadraticModel<'a> {
    x_ref: Vector,
    g_ref: Vector,
    f_ref: f64,
    mu: f64,
    hessian: &'a dyn LinearOperator,
}

impl<'a> QuadraticModel<'a> {
    pub fn new(
        x_ref: Vector,
        g_ref: Vector,
        f_ref: f64,
        mu: f64,
        hessian: &'a dyn LinearOperator,
    ) -> Result<Self> {
        let n = x_ref.len();
        check_dim("model gradient", g_ref.len(), n)?;
        check_dim("model hessian", hessian.dim(), n)?;
        if !(mu >= 0.0) {
            return Err(SqaError::Contract(format!("mu must be nonnegative, got {mu}")));
        }
        Ok(Self {
            x_ref,
            g_ref,
            f_ref,
            mu,
            hessian,
        })
    }

    pub fn dim(&self) -> usize {
        self.x_ref.len()
    }

    pub fn x_ref(&self) -> &Vector {
        &self.x_ref
    }

    pub fn g_ref(&self) -> &Vector {
        &self.g_ref
    }

    pub fn f_ref(&self) -> f64 {
        self.f_ref
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn hessian(&self) -> &dyn LinearOperator {
        self.hessian
    }

    /// `H_k v`, counted.
    pub fn hess_apply(&self, v: &Vector, tel: &mut Telemetry) -> Vector {
        tel.hess_vec_products += 1;
        self.hessian.apply(v)
    }

    /// `q_k(x_k)`; needs no Hessian product.
    pub fn value_at_reference(&self) -> f64 {
        self.f_ref + self.mu * l1_norm(&self.x_ref)
    }

    /// Value, smooth part and smooth gradient of the model at `x` from a
    /// single Hessian-vector product.
    pub fn evaluate_point(&self, x: &Vector, tel: &mut Telemetry) -> Result<EvaluatedPoint> {
        check_dim("model point", x.len(), self.dim())?;
        let d = x - &self.x_ref;
        let hd = self.hess_apply(&d, tel);
        let smooth_value = self.f_ref + self.g_ref.dot(&d) + 0.5 * d.dot(&hd);
        Ok(EvaluatedPoint {
            x: x.clone(),
            smooth_value,
            value: smooth_value + self.mu * l1_norm(x),
            gradient: &self.g_ref + hd,
        })
    }

    /// `q_k(x)`. One Hessian-vector product.
    pub fn value(&self, x: &Vector, tel: &mut Telemetry) -> Result<f64> {
        Ok(self.evaluate_point(x, tel)?.value)
    }

    /// `l_k(x) = f_k + g_k'(x - x_k) + mu ||x||_1`.
    pub fn linear_value(&self, x: &Vector) -> Result<f64> {
        check_dim("model point", x.len(), self.dim())?;
        Ok(self.f_ref + self.g_ref.dot(&(x - &self.x_ref)) + self.mu * l1_norm(x))
    }

    /// `g_k + H_k (x - x_k)`. One Hessian-vector product.
    pub fn smooth_gradient(&self, x: &Vector, tel: &mut Telemetry) -> Result<Vector> {
        check_dim("model point", x.len(), self.dim())?;
        let d = x - &self.x_ref;
        Ok(&self.g_ref + self.hess_apply(&d, tel))
    }
}

impl SmoothPart for QuadraticModel<'_> {
    fn dim(&self) -> usize {
        self.x_ref.len()
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn evaluate(&self, x: &Vector, tel: &mut Telemetry) -> Result<Option<EvaluatedPoint>> {
        self.evaluate_point(x, tel).map(Some)
    }

    fn lipschitz_hint(&self, at: &EvaluatedPoint, tel: &mut Telemetry) -> Result<f64> {
        let probe = if at.gradient.norm() > 0.0 {
            at.gradient.clone()
        } else {
            Vector::from_element(self.dim(), 1.0)
        };
        let hp = self.hess_apply(&probe, tel);
        let est = hp.norm() / probe.norm();
        Ok(if est.is_finite() && est > 0.0 { est } else { 1.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolverKind {
    Fista,
    ObmCg,
    ObmQn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InexactnessMode {
    /// `||F_q|| <= eta ||F||` and `q(x_hat) < q(x_k)`.
    Simple,
    /// `||F_q|| <= eta ||F||` and `q(x_hat) - q(x_k) <= zeta (l(x_hat) - l(x_k))`.
    Strengthened,
}

/// Forcing sequence for the inner residual test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaRule {
    /// `min(cap, max(1/k, floor))`.
    Harmonic,
    /// `min(cap, ||F(x_k)||_2)`.
    Residual,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianSource {
    Exact,
    Lbfgs,
}

/// The four end-to-end methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Fista,
    SqaFista,
    SqaObmCg,
    SqaObmQn,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::Fista,
        SolverKind::SqaFista,
        SolverKind::SqaObmCg,
        SolverKind::SqaObmQn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Fista => "fista",
            SolverKind::SqaFista => "sqa_fista",
            SolverKind::SqaObmCg => "sqa_obm_cg",
            SolverKind::SqaObmQn => "sqa_obm_qn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Inner solver and Hessian source for the SQA variants.
    pub fn sqa_parts(self) -> Option<(InnerSolverKind, HessianSource)> {
        match self {
            SolverKind::Fista => None,
            SolverKind::SqaFista => Some((InnerSolverKind::Fista, HessianSource::Exact)),
            SolverKind::SqaObmCg => Some((InnerSolverKind::ObmCg, HessianSource::Exact)),
            SolverKind::SqaObmQn => Some((InnerSolverKind::ObmQn, HessianSource::Lbfgs)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub theta: f64,
    pub zeta: f64,
    pub tau: f64,
    pub tol_inf: f64,
    pub max_outer: usize,
    pub eta_floor: f64,
    pub eta_cap: f64,
    pub eta_rule: EtaRule,
    pub inner_solver: InnerSolverKind,
    pub inexactness_mode: InexactnessMode,
    pub lbfgs_memory: usize,
    pub max_inner: usize,
    pub backtrack_factor: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            theta: 0.1,
            zeta: 0.1,
            tau: 0.5,
            tol_inf: 1e-5,
            max_outer: 3000,
            eta_floor: 0.1,
            eta_cap: 0.9,
            eta_rule: EtaRule::Harmonic,
            inner_solver: InnerSolverKind::ObmCg,
            inexactness_mode: InexactnessMode::Strengthened,
            lbfgs_memory: 50,
            max_inner: 100_000,
            backtrack_factor: 0.5,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SqaError::Contract(msg));
        if !(self.theta > 0.0 && self.theta < 0.5) {
            return bad(format!("theta must lie in (0, 1/2), got {}", self.theta));
        }
        // zeta == theta is what the reported experiments used; the theory wants zeta > theta.
        if !(self.zeta >= self.theta && self.zeta < 0.5) {
            return bad(format!("zeta must lie in [theta, 1/2), got {}", self.zeta));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if !(self.tol_inf > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tol_inf));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.lbfgs_memory == 0 {
            return bad("iteration caps and L-BFGS memory must be positive".into());
        }
        if !(self.eta_cap > 0.0 && self.eta_cap < 1.0) {
            return bad(format!("eta cap must lie in (0, 1), got {}", self.eta_cap));
        }
        if !(self.eta_floor >= 0.0 && self.eta_floor <= self.eta_cap) {
            return bad(format!("eta floor must lie in [0, cap], got {}", self.eta_floor));
        }
        if let EtaRule::Constant(eta) = self.eta_rule {
            if !(0.0..1.0).contains(&eta) {
                return bad(format!("constant eta must lie in [0, 1), got {eta}"));
            }
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad(format!(
                "backtrack factor must lie in (0, 1), got {}",
                self.backtrack_factor
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: usize,
    pub phi: f64,
    pub residual_inf: f64,
    pub alpha: f64,
    pub inner_iterations: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub status: RunStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub fg_evaluations: usize,
    pub hess_vec_products: usize,
    pub wall_time_seconds: f64,
    pub final_residual_inf: f64,
    pub trace: Vec<TraceEntry>,
}

/// Curvature constants of a small instance, used to evaluate the
/// sufficient-decrease and step-length bounds of the global analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConstants {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lipschitz_m: f64,
}

impl AnalysisConstants {
    /// Eigenvalue bounds of a dense symmetric model Hessian together with a
    /// gradient Lipschitz bound of `f`.
    pub fn from_hessian(hessian: &DMatrix<f64>, lipschitz_m: f64) -> Self {
        let (lambda_min, lambda_max) = eigen_bounds(hessian);
        Self {
            lambda_min,
            lambda_max,
            lipschitz_m,
        }
    }

    /// `gamma = lambda/2 * ((1 - eta) / (1/tau + 2 Lambda))^2`.
    pub fn gamma(&self, eta: f64, tau: f64) -> f64 {
        let r = (1.0 - eta) / (1.0 / tau + 2.0 * self.lambda_max);
        0.5 * self.lambda_min * r * r
    }

    /// Lower bound `(1 - theta) lambda / (2 M)` on steps accepted by a
    /// halving line search.
    pub fn step_floor(&self, theta: f64) -> f64 {
        (1.0 - theta) * self.lambda_min / (2.0 * self.lipschitz_m)
    }
}

/// Builds the dense matrix of an operator column by column.
pub fn materialize(op: &dyn LinearOperator) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = Vector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        m.set_column(j, &op.apply(&e));
        e[j] = 0.0;
    }
    m
}

/// Smallest and largest eigenvalue of the symmetric part of `m`.
pub fn eigen_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    (eig.min(), eig.max())
}

pub fn l1_norm(x: &Vector) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn inf_norm(x: &Vector) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}
