//! Soft-thresholding, the ISTA step and the semi-smooth optimality residuals.

use crate::error::{check_dim, Result, SqaError};
use crate::model::{inf_norm, EvaluatedPoint, QuadraticModel, Telemetry};
use crate::Vector;

/// Projection of a scalar onto `[-mu, mu]`.
#[inline]
pub fn clip(a: f64, mu: f64) -> f64 {
    a.max(-mu).min(mu)
}

/// `sign(v_i) * max(|v_i| - t, 0)` componentwise.
pub fn soft_threshold(v: &Vector, t: f64) -> Result<Vector> {
    if !(t >= 0.0) {
        return Err(SqaError::Contract(format!("threshold must be nonnegative, got {t}")));
    }
    Ok(v.map(|vi| shrink(vi, t)))
}

#[inline]
pub(crate) fn shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SqaError::Contract(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}

/// Exact minimizer of `g'(y - x) + ||y - x||^2 / (2 tau) + mu ||y||_1`.
pub fn ista_point(x: &Vector, g: &Vector, tau: f64, mu: f64) -> Result<Vector> {
    check_tau(tau)?;
    check_dim("gradient", g.len(), x.len())?;
    soft_threshold(&(x - g * tau), tau * mu)
}

/// `F(x) = g - P_[-mu, mu](g - x / tau)`.
pub fn residual(x: &Vector, g: &Vector, tau: f64, mu: f64) -> Result<Vector> {
    check_tau(tau)?;
    check_dim("gradient", g.len(), x.len())?;
    Ok(Vector::from_fn(x.len(), |i, _| {
        g[i] - clip(g[i] - x[i] / tau, mu)
    }))
}

/// Residual of the model at an already evaluated point; costs nothing extra.
pub fn point_residual(point: &EvaluatedPoint, tau: f64, mu: f64) -> Result<Vector> {
    residual(&point.x, &point.gradient, tau, mu)
}

/// `F_q(x_k; x)`: the residual of the quadratic model. One Hessian-vector
/// product.
pub fn subproblem_residual(
    model: &QuadraticModel<'_>,
    x: &Vector,
    tau: f64,
    tel: &mut Telemetry,
) -> Result<Vector> {
    check_tau(tau)?;
    let u = model.smooth_gradient(x, tel)?;
    residual(x, &u, tau, model.mu())
}

/// `||F(x)||_inf <= tol`.
pub fn is_optimal(residual: &Vector, tol_inf: f64) -> bool {
    inf_norm(residual) <= tol_inf
}
