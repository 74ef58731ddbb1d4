use crate::error::{check_dim, Result, SqaError};
use crate::model::{LinearOperator, SmoothFunction};
use crate::Vector;

/// Row-major sparse matrix with strictly increasing column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_rows(ncols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (r, row) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(j, v) in row {
                if j >= ncols {
                    return Err(SqaError::Contract(format!(
                        "row {r}: column {j} out of range for {ncols} columns"
                    )));
                }
                if prev.is_some_and(|p| j <= p) {
                    return Err(SqaError::Contract(format!(
                        "row {r}: column indices must be strictly increasing"
                    )));
                }
                prev = Some(j);
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_dot(&self, i: usize, x: &Vector) -> f64 {
        self.row(i).map(|(j, v)| v * x[j]).sum()
    }

    /// `Z x`.
    pub fn mul_vec(&self, x: &Vector) -> Vector {
        Vector::from_fn(self.nrows(), |i, _| self.row_dot(i, x))
    }

    /// `Z' w`.
    pub fn tr_mul_vec(&self, w: &Vector) -> Vector {
        let mut out = Vector::zeros(self.ncols);
        for i in 0..self.nrows() {
            let wi = w[i];
            if wi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += wi * v;
                }
            }
        }
        out
    }
}

/// Labelled samples for `(1/N) sum log(1 + exp(-y_i x'z_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticDataset {
    features: CsrMatrix,
    labels: Vec<f64>,
}

/// `log(1 + exp(-m))` without overflow.
fn log1p_exp_neg(m: f64) -> f64 {
    if m > 35.0 {
        (-m).exp()
    } else if m < -35.0 {
        -m
    } else {
        (-m).exp().ln_1p()
    }
}

/// `1 / (1 + exp(m))`, the logistic sigmoid of `-m`.
fn sigmoid_neg(m: f64) -> f64 {
    if m >= 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

impl LogisticDataset {
    pub fn new(features: CsrMatrix, labels: Vec<f64>) -> Result<Self> {
        check_dim("label vector", labels.len(), features.nrows())?;
        if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y != 1.0 && y != -1.0) {
            return Err(SqaError::Contract(format!("label {i} is {y}, expected -1 or +1")));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &CsrMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_count(&self) -> usize {
        self.features.ncols()
    }

    fn margins(&self, x: &Vector) -> Result<Vector> {
        check_dim("weights", x.len(), self.feature_count())?;
        if self.samples() == 0 {
            return Err(SqaError::Contract("dataset has no samples".into()));
        }
        Ok(Vector::from_fn(self.samples(), |i, _| {
            self.labels[i] * self.features.row_dot(i, x)
        }))
    }

    pub fn logistic_value(&self, x: &Vector) -> Result<f64> {
        let m = self.margins(x)?;
        Ok(m.iter().map(|&mi| log1p_exp_neg(mi)).sum::<f64>() / self.samples() as f64)
    }

    pub fn logistic_gradient(&self, x: &Vector) -> Result<Vector> {
        let m = self.margins(x)?;
        let n = self.samples() as f64;
        let w = Vector::from_fn(self.samples(), |i, _| -self.labels[i] * sigmoid_neg(m[i]) / n);
        Ok(self.features.tr_mul_vec(&w))
    }

    /// Per-sample curvature weights `sigma_i (1 - sigma_i) / N` at `x`.
    fn curvature_weights(&self, x: &Vector) -> Result<Vector> {
        let m = self.margins(x)?;
        let n = self.samples() as f64;
        Ok(m.map(|mi| {
            let s = sigmoid_neg(mi);
            s * (1.0 - s) / n
        }))
    }

    pub fn logistic_hess_vec(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        check_dim("direction", v.len(), self.feature_count())?;
        let w = self.curvature_weights(x)?;
        Ok(self.features.tr_mul_vec(&self.features.mul_vec(v).component_mul(&w)))
    }
}

struct LogisticHessian<'a> {
    data: &'a LogisticDataset,
    weights: Vector,
}

impl LinearOperator for LogisticHessian<'_> {
    fn dim(&self) -> usize {
        self.data.feature_count()
    }

    fn apply(&self, v: &Vector) -> Vector {
        let zv = self.data.features.mul_vec(v);
        self.data.features.tr_mul_vec(&zv.component_mul(&self.weights))
    }
}

impl SmoothFunction for LogisticDataset {
    fn dim(&self) -> usize {
        self.feature_count()
    }

    fn value(&self, x: &Vector) -> f64 {
        self.logistic_value(x).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        self.logistic_gradient(x)
    }

    fn hess_vec(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        self.logistic_hess_vec(x, v)
    }

    fn hessian_at<'a>(&'a self, x: &Vector) -> Result<Box<dyn LinearOperator + 'a>> {
        Ok(Box::new(LogisticHessian {
            data: self,
            weights: self.curvature_weights(x)?,
        }))
    }
}
