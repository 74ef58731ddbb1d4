use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::rng;
use crate::error::{check_dim, Result, SqaError};
use crate::model::{DenseOperator, LinearOperator, SmoothFunction};
use crate::Vector;

/// `f(x) = 0.5 x'Ax - b'x` with SPD `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticQuadratic {
    pub a: DMatrix<f64>,
    pub b: Vector,
}

/// Eigenvalues log-spaced in `[1, condition]` in a seeded random orthogonal
/// basis; `b` standard normal.
pub fn synthetic_quadratic(n: usize, condition: f64, seed: u64) -> Result<SyntheticQuadratic> {
    if n == 0 {
        return Err(SqaError::Contract("dimension must be positive".into()));
    }
    if !(condition >= 1.0 && condition.is_finite()) {
        return Err(SqaError::Contract(format!("condition must be >= 1, got {condition}")));
    }
    let mut rng = rng(seed);
    let gauss = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let b = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let a = if condition == 1.0 {
        DMatrix::identity(n, n)
    } else {
        let q = gauss.qr().q();
        let eig = Vector::from_fn(n, |i, _| {
            if n == 1 {
                1.0
            } else {
                condition.powf(i as f64 / (n - 1) as f64)
            }
        });
        let a: DMatrix<f64> = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        (&a + a.transpose()) * 0.5
    };
    Ok(SyntheticQuadratic { a, b })
}

impl SyntheticQuadratic {
    /// Median of `|b_i|`; at this weight roughly half the coordinates start
    /// out locally optimal at zero.
    pub fn median_mu(&self) -> f64 {
        let mut abs: Vec<f64> = self.b.iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        abs[abs.len() / 2]
    }
}

impl SmoothFunction for SyntheticQuadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        if x.len() != self.b.len() {
            return f64::NAN;
        }
        0.5 * x.dot(&(&self.a * x)) - self.b.dot(x)
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        check_dim("point", x.len(), self.dim())?;
        Ok(&self.a * x - &self.b)
    }

    fn hess_vec(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        check_dim("point", x.len(), self.dim())?;
        check_dim("direction", v.len(), self.dim())?;
        Ok(&self.a * v)
    }

    fn hessian_at<'a>(&'a self, x: &Vector) -> Result<Box<dyn LinearOperator + 'a>> {
        check_dim("point", x.len(), self.dim())?;
        Ok(Box::new(DenseOperator(self.a.clone())))
    }
}
