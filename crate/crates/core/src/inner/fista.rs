//! Accelerated proximal gradient with backtracking on the Lipschitz estimate.
//!
//! The iteration is kept monotone: an accelerated candidate that increases
//! the objective is replaced by a plain proximal step from
//! the current iterate and the momentum is reset. The plain step decreases
//! the objective in exact arithmetic, so it is accepted up to rounding.

use super::{InnerStatus, StopRule};
use crate::error::{Result, SqaError};
use crate::model::{EvaluatedPoint, SmoothPart, Telemetry};
use crate::prox::soft_threshold;
use crate::Vector;

const MAX_LIPSCHITZ: f64 = 1e300;

/// Rounding allowance for value comparisons at `value`.
pub fn value_slack(value: f64) -> f64 {
    10.0 * f64::EPSILON * value.abs().max(1.0)
}

#[derive(Debug, Clone)]
pub struct FistaOutcome {
    pub point: EvaluatedPoint,
    pub iterations: usize,
    pub status: InnerStatus,
    /// Final Lipschitz estimate.
    pub lipschitz: f64,
}

/// Proximal gradient step from `from`, doubling `lip` until the quadratic
/// upper bound holds at the candidate.
fn prox_step<S: SmoothPart + ?Sized>(
    smooth: &S,
    from: &EvaluatedPoint,
    lip: &mut f64,
    tel: &mut Telemetry,
) -> Result<Option<EvaluatedPoint>> {
    let mu = smooth.mu();
    loop {
        let z = soft_threshold(&(&from.x - &from.gradient / *lip), mu / *lip)?;
        if let Some(p) = smooth.evaluate(&z, tel)? {
            let d = &z - &from.x;
            let bound = from.smooth_value + from.gradient.dot(&d) + 0.5 * *lip * d.norm_squared();
            if p.smooth_value <= bound + value_slack(from.smooth_value) {
                return Ok(Some(p));
            }
        }
        *lip *= 2.0;
        if *lip > MAX_LIPSCHITZ {
            return Ok(None);
        }
    }
}

/// Minimizes `smooth + mu ||x||_1` from `start` until `stop` accepts an
/// iterate or `max_iter` iterations have run.
///
/// A stop predicate that accepts `start` returns it after zero iterations.
pub fn fista_composite<S: SmoothPart + ?Sized>(
    smooth: &S,
    start: &Vector,
    stop: &mut StopRule<'_>,
    max_iter: usize,
    tel: &mut Telemetry,
) -> Result<FistaOutcome> {
    let mut x = smooth
        .evaluate(start, tel)?
        .ok_or_else(|| SqaError::Domain("starting point outside the domain".into()))?;
    if stop(&x) {
        return Ok(FistaOutcome {
            point: x,
            iterations: 0,
            status: InnerStatus::Converged,
            lipschitz: f64::NAN,
        });
    }
    let mut lip = smooth.lipschitz_hint(&x, tel)?;
    let mut y = x.x.clone();
    let mut t = 1.0f64;

    for iter in 1..=max_iter {
        let anchor = match smooth.evaluate(&y, tel)? {
            Some(p) => p,
            None => {
                // extrapolated point left the domain; restart from x
                t = 1.0;
                x.clone()
            }
        };
        let candidate = prox_step(smooth, &anchor, &mut lip, tel)?;
        let accelerated = candidate.filter(|c| c.value <= x.value);
        match accelerated {
            Some(c) => {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                y = &c.x + (&c.x - &x.x) * ((t - 1.0) / t_next);
                t = t_next;
                x = c;
            }
            None => {
                tel.safeguard_steps += 1;
                let fallback = prox_step(smooth, &x, &mut lip, tel)?;
                match fallback.filter(|c| c.value <= x.value + value_slack(x.value) && c.x != x.x) {
                    Some(c) => x = c,
                    None => {
                        return Ok(FistaOutcome {
                            point: x,
                            iterations: iter,
                            status: InnerStatus::Stalled,
                            lipschitz: lip,
                        })
                    }
                }
                t = 1.0;
                y = x.x.clone();
            }
        }
        if stop(&x) {
            return Ok(FistaOutcome {
                point: x,
                iterations: iter,
                status: InnerStatus::Converged,
                lipschitz: lip,
            });
        }
    }
    Ok(FistaOutcome {
        point: x,
        iterations: max_iter,
        status: InnerStatus::IterationCap,
        lipschitz: lip,
    })
}
