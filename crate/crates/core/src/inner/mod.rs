//! Solvers for the piecewise quadratic subproblem.

pub mod fista;
pub mod lbfgs;
pub mod obm;

pub use fista::{fista_composite, FistaOutcome};
pub use lbfgs::{LbfgsStore, LbfgsUpdate};
pub use obm::{
    cg_budget, min_norm_subgradient, obm_projected_line_search, obm_solve, orthant_face,
    orthant_project, subspace_cg_solve, ObmOptions, ObmStep, ObmVariant, OrthantFace,
};

use crate::error::Result;
use crate::model::{EvaluatedPoint, QuadraticModel, Telemetry};
use crate::prox::point_residual;
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    Converged,
    IterationCap,
    Stalled,
}

/// Outcome of one subproblem solve.
#[derive(Debug, Clone)]
pub struct InnerResult {
    pub solution: Vector,
    /// Model value, smooth part and smooth gradient at `solution`.
    pub point: EvaluatedPoint,
    pub inner_iterations: usize,
    /// `||F_q(x_k; x_hat)||_2`.
    pub residual_norm: f64,
    /// `q_k(x_k) - q_k(x_hat)`.
    pub model_decrease: f64,
    pub status: InnerStatus,
    /// CG iteration budget used by the orthant-based CG variant.
    pub cg_cap: Option<usize>,
}

/// Stop predicate evaluated on every inner iterate.
pub type StopRule<'a> = dyn FnMut(&EvaluatedPoint) -> bool + 'a;

impl InnerResult {
    pub(crate) fn from_point(
        model: &QuadraticModel<'_>,
        point: EvaluatedPoint,
        inner_iterations: usize,
        status: InnerStatus,
        tau: f64,
        cg_cap: Option<usize>,
    ) -> Result<Self> {
        let residual_norm = point_residual(&point, tau, model.mu())?.norm();
        Ok(Self {
            solution: point.x.clone(),
            model_decrease: model.value_at_reference() - point.value,
            point,
            inner_iterations,
            residual_norm,
            status,
            cg_cap,
        })
    }
}

/// FISTA on the model `q_k`, warm-started at `start`.
pub fn fista_inner(
    model: &QuadraticModel<'_>,
    start: &Vector,
    tau: f64,
    stop: &mut StopRule<'_>,
    max_iter: usize,
    tel: &mut Telemetry,
) -> Result<InnerResult> {
    let out = fista_composite(model, start, stop, max_iter, tel)?;
    InnerResult::from_point(model, out.point, out.iterations, out.status, tau, None)
}
