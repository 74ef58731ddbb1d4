use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{check_dim, Result, SqaError};
use crate::model::{LinearOperator, SmoothFunction};
use crate::Vector;

/// `tr(S P) - log det P` over the flattened `p x p` matrix `P`.
///
/// `P` is symmetrized on every read, so the oracles are those of the
/// function composed with the symmetric projection.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceProblem {
    sample_cov: DMatrix<f64>,
}

impl CovarianceProblem {
    pub fn new(sample_cov: DMatrix<f64>) -> Result<Self> {
        if !sample_cov.is_square() || sample_cov.nrows() == 0 {
            return Err(SqaError::Contract("sample covariance must be square and nonempty".into()));
        }
        let sym = (&sample_cov + sample_cov.transpose()) * 0.5;
        Ok(Self { sample_cov: sym })
    }

    pub fn sample_cov(&self) -> &DMatrix<f64> {
        &self.sample_cov
    }

    pub fn p(&self) -> usize {
        self.sample_cov.nrows()
    }

    /// Symmetric matrix behind a flattened vector.
    pub fn unflatten(&self, pvec: &Vector) -> Result<DMatrix<f64>> {
        let p = self.p();
        check_dim("matrix vector", pvec.len(), p * p)?;
        let m = DMatrix::from_column_slice(p, p, pvec.as_slice());
        Ok((&m + m.transpose()) * 0.5)
    }

    pub fn flatten(m: &DMatrix<f64>) -> Vector {
        Vector::from_column_slice(m.as_slice())
    }

    fn factor(&self, pvec: &Vector) -> Result<Option<Cholesky<f64, Dyn>>> {
        Ok(Cholesky::new(self.unflatten(pvec)?))
    }

    fn inverse(&self, pvec: &Vector) -> Result<DMatrix<f64>> {
        let chol = self
            .factor(pvec)?
            .ok_or_else(|| SqaError::Domain("matrix is not positive definite".into()))?;
        let inv = chol.inverse();
        Ok((&inv + inv.transpose()) * 0.5)
    }

    /// `+inf` when `P` is not positive definite.
    pub fn logdet_value(&self, pvec: &Vector) -> Result<f64> {
        let p = self.unflatten(pvec)?;
        let Some(chol) = Cholesky::new(p.clone()) else {
            return Ok(f64::INFINITY);
        };
        let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(self.sample_cov.component_mul(&p).sum() - logdet)
    }

    /// `S - P^{-1}`.
    pub fn logdet_gradient(&self, pvec: &Vector) -> Result<Vector> {
        Ok(Self::flatten(&(&self.sample_cov - self.inverse(pvec)?)))
    }

    /// `P^{-1} sym(V) P^{-1}`.
    pub fn logdet_hess_vec(&self, pvec: &Vector, vvec: &Vector) -> Result<Vector> {
        let inv = self.inverse(pvec)?;
        Ok(kron_apply(&inv, &self.unflatten(vvec)?))
    }
}

fn kron_apply(inv: &DMatrix<f64>, v: &DMatrix<f64>) -> Vector {
    let w = inv * v * inv;
    CovarianceProblem::flatten(&((&w + w.transpose()) * 0.5))
}

struct CovarianceHessian {
    inv: DMatrix<f64>,
}

impl LinearOperator for CovarianceHessian {
    fn dim(&self) -> usize {
        self.inv.nrows() * self.inv.nrows()
    }

    fn apply(&self, v: &Vector) -> Vector {
        let p = self.inv.nrows();
        let m = DMatrix::from_column_slice(p, p, v.as_slice());
        kron_apply(&self.inv, &((&m + m.transpose()) * 0.5))
    }
}

impl SmoothFunction for CovarianceProblem {
    fn dim(&self) -> usize {
        self.p() * self.p()
    }

    fn value(&self, x: &Vector) -> f64 {
        self.logdet_value(x).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        self.logdet_gradient(x)
    }

    fn hess_vec(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        self.logdet_hess_vec(x, v)
    }

    fn hessian_at<'a>(&'a self, x: &Vector) -> Result<Box<dyn LinearOperator + 'a>> {
        Ok(Box::new(CovarianceHessian { inv: self.inverse(x)? }))
    }

    /// The identity; zero is outside the domain.
    fn initial_point(&self) -> Vector {
        Self::flatten(&DMatrix::identity(self.p(), self.p()))
    }
}
