//! Two-phase orthant-based method for the subproblem.
//!
//! Each iteration picks an orthant face from the signs of the iterate and of
//! the minimum-norm subgradient, computes a subspace step on the free
//! variables (truncated CG on the exact Hessian, or an exact solve with the
//! compact L-BFGS matrix), and backtracks along the step while projecting
//! back onto the face.

use super::fista::value_slack;
use super::lbfgs::LbfgsStore;
use super::{InnerResult, InnerStatus, StopRule};
use crate::error::{check_dim, Result, SqaError};
use crate::model::{EvaluatedPoint, QuadraticModel, SmoothPart, Telemetry};
use crate::prox::ista_point;
use crate::Vector;

/// Armijo constant of the projected line search.
pub const OBM_ARMIJO: f64 = 1e-4;
/// Steps below this are treated as a stall.
pub const OBM_MIN_STEP: f64 = 1e-12;

/// Sign pattern `omega` of an orthant face; zeros form the active set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrthantFace {
    omega: Vec<i8>,
}

impl OrthantFace {
    pub fn new(omega: Vec<i8>) -> Self {
        assert!(omega.iter().all(|w| (-1..=1).contains(w)), "face signs must be -1, 0 or 1");
        Self { omega }
    }

    pub fn omega(&self) -> &[i8] {
        &self.omega
    }

    pub fn active_set(&self) -> Vec<usize> {
        (0..self.omega.len()).filter(|&i| self.omega[i] == 0).collect()
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.omega[i] != 0
    }

    pub fn free_count(&self) -> usize {
        self.omega.iter().filter(|&&w| w != 0).count()
    }

    /// `z_i * omega_i >= 0` everywhere and `z_i = 0` on the active set.
    pub fn contains(&self, z: &Vector) -> bool {
        z.len() == self.omega.len()
            && z.iter().zip(&self.omega).all(|(&zi, &w)| match w {
                0 => zi == 0.0,
                _ => zi * f64::from(w) >= 0.0,
            })
    }

    /// Zeroes the active components.
    pub fn mask(&self, v: &Vector) -> Vector {
        Vector::from_fn(v.len(), |i, _| if self.omega[i] != 0 { v[i] } else { 0.0 })
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Minimum-norm subgradient of `u'z + mu ||z||_1` in `z`, given the smooth
/// gradient `u` at `z`.
pub(crate) fn min_norm_subgradient_from(z: &Vector, u: &Vector, mu: f64) -> Vector {
    Vector::from_fn(z.len(), |i, _| {
        let (zi, ui) = (z[i], u[i]);
        if zi > 0.0 || (zi == 0.0 && ui + mu < 0.0) {
            ui + mu
        } else if zi < 0.0 || (zi == 0.0 && ui - mu > 0.0) {
            ui - mu
        } else {
            0.0
        }
    })
}

/// Minimum-norm subgradient of `q_k` at `z`. One Hessian-vector product.
pub fn min_norm_subgradient(
    model: &QuadraticModel<'_>,
    z: &Vector,
    tel: &mut Telemetry,
) -> Result<Vector> {
    let u = model.smooth_gradient(z, tel)?;
    Ok(min_norm_subgradient_from(z, &u, model.mu()))
}

/// `omega_i = sign(z_i)` for nonzero `z_i`, else `sign(-v_i)`.
pub fn orthant_face(z: &Vector, v: &Vector) -> Result<OrthantFace> {
    check_dim("subgradient", v.len(), z.len())?;
    Ok(OrthantFace::new(
        z.iter()
            .zip(v.iter())
            .map(|(&zi, &vi)| if zi != 0.0 { sign(zi) } else { sign(-vi) })
            .collect(),
    ))
}

/// Euclidean projection onto the closed orthant face.
pub fn orthant_project(w: &Vector, face: &OrthantFace) -> Result<Vector> {
    check_dim("point", w.len(), face.omega.len())?;
    Ok(Vector::from_fn(w.len(), |i, _| match face.omega[i] {
        1 => w[i].max(0.0),
        -1 => w[i].min(0.0),
        _ => 0.0,
    }))
}

/// CG iteration budget `min(3, 1 + floor(k / 10))` for outer iteration `k`.
pub fn cg_budget(outer_k: usize) -> usize {
    (1 + outer_k / 10).min(3)
}

/// At most `cg_cap` CG iterations on `H_FF d_F = -v_F` from `d = 0`.
///
/// Nonpositive curvature ends the iteration with the current iterate, or
/// with `-v_F` if it occurs on the first iteration.
pub fn subspace_cg_solve(
    model: &QuadraticModel<'_>,
    face: &OrthantFace,
    v: &Vector,
    cg_cap: usize,
    tel: &mut Telemetry,
) -> Result<Vector> {
    check_dim("subgradient", v.len(), model.dim())?;
    let mut d = Vector::zeros(v.len());
    let mut r = -face.mask(v);
    let r0 = r.norm();
    if r0 == 0.0 {
        return Ok(d);
    }
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    for it in 0..cg_cap.max(1) {
        let hp = face.mask(&model.hess_apply(&p, tel));
        let curv = p.dot(&hp);
        if !(curv > 0.0) {
            return Ok(if it == 0 { -face.mask(v) } else { d });
        }
        let step = rr / curv;
        d.axpy(step, &p, 1.0);
        r.axpy(-step, &hp, 1.0);
        let rr_next = r.norm_squared();
        if rr_next.sqrt() <= 1e-14 * r0 {
            break;
        }
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
    }
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct ProjectedStep {
    pub point: EvaluatedPoint,
    pub alpha: f64,
    pub stalled: bool,
}

/// Backtracks `alpha = 1, 1/2, ...` on `c = P_face(z + alpha d)` until
/// `q(c) <= q(z) + 1e-4 v'(c - z)`.
pub fn obm_projected_line_search(
    model: &QuadraticModel<'_>,
    at: &EvaluatedPoint,
    face: &OrthantFace,
    d: &Vector,
    v: &Vector,
    tel: &mut Telemetry,
) -> Result<ProjectedStep> {
    check_dim("direction", d.len(), at.x.len())?;
    let stall = |at: &EvaluatedPoint| ProjectedStep {
        point: at.clone(),
        alpha: 0.0,
        stalled: true,
    };
    if d.iter().all(|&di| di == 0.0) {
        return Ok(stall(at));
    }
    let mut alpha = 1.0;
    while alpha >= OBM_MIN_STEP {
        let c = orthant_project(&(&at.x + d * alpha), face)?;
        let point = model.evaluate_point(&c, tel)?;
        if point.value <= at.value + OBM_ARMIJO * v.dot(&(&c - &at.x)) && c != at.x {
            return Ok(ProjectedStep {
                point,
                alpha,
                stalled: false,
            });
        }
        alpha *= 0.5;
    }
    Ok(stall(at))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObmVariant {
    /// Truncated CG on the model Hessian.
    Cg,
    /// Exact reduced solve with the compact L-BFGS matrix.
    Qn,
}

#[derive(Debug, Clone, Copy)]
pub struct ObmOptions {
    pub variant: ObmVariant,
    /// Outer iteration index, drives the CG budget.
    pub outer_k: usize,
    pub max_iter: usize,
    /// Override of the CG budget (tests and high-accuracy solves).
    pub cg_cap: Option<usize>,
    /// `tau` used to report the final subproblem residual.
    pub tau: f64,
}

/// One accepted OBM iteration, passed to the observer.
#[derive(Debug)]
pub struct ObmStep<'a> {
    pub t: usize,
    pub face: &'a OrthantFace,
    pub direction: &'a Vector,
    pub iterate: &'a Vector,
    pub alpha: f64,
    /// The iterate came from the proximal-gradient safeguard rather than the
    /// face step.
    pub safeguard: bool,
}

/// Proximal gradient step on the model from `at` with a backtracked step.
fn safeguard_step(
    model: &QuadraticModel<'_>,
    at: &EvaluatedPoint,
    lip: &mut f64,
    tel: &mut Telemetry,
) -> Result<Option<EvaluatedPoint>> {
    tel.safeguard_steps += 1;
    loop {
        let z = ista_point(&at.x, &at.gradient, 1.0 / *lip, model.mu())?;
        if z == at.x {
            return Ok(None);
        }
        let p = model.evaluate_point(&z, tel)?;
        let d = &z - &at.x;
        let bound = at.smooth_value + at.gradient.dot(&d) + 0.5 * *lip * d.norm_squared();
        if p.smooth_value <= bound + value_slack(at.smooth_value) {
            return Ok((p.value <= at.value + value_slack(at.value)).then_some(p));
        }
        *lip *= 2.0;
        if *lip > 1e300 {
            return Ok(None);
        }
    }
}

/// Orthant-based solve of `min q_k` from `start`.
pub fn obm_solve(
    model: &QuadraticModel<'_>,
    start: &Vector,
    stop: &mut StopRule<'_>,
    store: Option<&LbfgsStore>,
    opts: ObmOptions,
    observer: &mut dyn FnMut(&ObmStep<'_>),
    tel: &mut Telemetry,
) -> Result<InnerResult> {
    if opts.variant == ObmVariant::Qn && store.is_none() {
        return Err(SqaError::Contract("quasi-Newton OBM needs an L-BFGS store".into()));
    }
    let cg_cap = match opts.variant {
        ObmVariant::Cg => Some(opts.cg_cap.unwrap_or_else(|| cg_budget(opts.outer_k))),
        ObmVariant::Qn => None,
    };
    let mu = model.mu();
    let mut z = model.evaluate_point(start, tel)?;
    if stop(&z) {
        return InnerResult::from_point(model, z, 0, InnerStatus::Converged, opts.tau, cg_cap);
    }
    let mut lip = f64::NAN;

    for t in 1..=opts.max_iter {
        let v = min_norm_subgradient_from(&z.x, &z.gradient, mu);
        let face = orthant_face(&z.x, &v)?;
        let d = match opts.variant {
            ObmVariant::Cg => subspace_cg_solve(model, &face, &v, cg_cap.unwrap_or(1), tel)?,
            ObmVariant::Qn => {
                let (d, fallback) = store.expect("checked above").reduced_inverse_solve(&face, &v)?;
                if fallback {
                    tel.reduced_solve_fallbacks += 1;
                }
                d
            }
        };
        let step = if v.dot(&d) < 0.0 {
            obm_projected_line_search(model, &z, &face, &d, &v, tel)?
        } else {
            ProjectedStep {
                point: z.clone(),
                alpha: 0.0,
                stalled: true,
            }
        };
        if step.stalled {
            if lip.is_nan() {
                lip = model.lipschitz_hint(&z, tel)?;
            }
            match safeguard_step(model, &z, &mut lip, tel)? {
                Some(p) => z = p,
                None => {
                    return InnerResult::from_point(model, z, t, InnerStatus::Stalled, opts.tau, cg_cap)
                }
            }
            observer(&ObmStep {
                t,
                face: &face,
                direction: &d,
                iterate: &z.x,
                alpha: 0.0,
                safeguard: true,
            });
        } else {
            z = step.point;
            observer(&ObmStep {
                t,
                face: &face,
                direction: &d,
                iterate: &z.x,
                alpha: step.alpha,
                safeguard: false,
            });
        }
        if stop(&z) {
            return InnerResult::from_point(model, z, t, InnerStatus::Converged, opts.tau, cg_cap);
        }
    }
    InnerResult::from_point(model, z, opts.max_iter, InnerStatus::IterationCap, opts.tau, cg_cap)
}
