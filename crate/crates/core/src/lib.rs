//! Inexact successive quadratic approximation (proximal Newton) for
//! `min f(x) + mu * ||x||_1` with a smooth convex `f`.
//!
//! The outer loop ([`driver::sqa_solve`]) builds a piecewise quadratic model of
//! the objective at each iterate, solves it inexactly with one of the inner
//! solvers in [`inner`], and globalizes with a backtracking line search. The
//! inner solve is stopped by a residual test built on the semi-smooth
//! optimality map in [`prox`].

pub mod driver;
pub mod error;
pub mod inner;
pub mod io;
pub mod model;
pub mod objectives;
pub mod prox;

pub use driver::{fista_baseline_solve, solve, sqa_solve, SolveOutcome};
pub use error::{Result, SqaError};
pub use model::{
    CompositeProblem, ConvergenceReport, HessianSource, InexactnessMode, InnerSolverKind,
    LinearOperator, QuadraticModel, SmoothFunction, SolverConfig, SolverKind, Telemetry,
};

/// Dense real vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
