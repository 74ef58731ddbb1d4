//! Smooth oracles: l1-regularized logistic loss, the log-det covariance
//! objective and a synthetic strongly convex quadratic, plus seeded
//! generators for desk-scale instances.

mod covariance;
mod logistic;
mod quadratic;

pub use covariance::CovarianceProblem;
pub use logistic::{CsrMatrix, LogisticDataset};
pub use quadratic::{synthetic_quadratic, SyntheticQuadratic};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SqaError};

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Logistic data with dense Gaussian features and labels drawn from a sparse
/// ground-truth weight vector with 10% label noise.
pub fn synthetic_logistic(samples: usize, features: usize, seed: u64) -> Result<LogisticDataset> {
    if samples == 0 || features == 0 {
        return Err(SqaError::Contract("need at least one sample and one feature".into()));
    }
    let mut rng = rng(seed);
    let truth: Vec<f64> = (0..features)
        .map(|j| {
            if j % 5 == 0 {
                let w: f64 = StandardNormal.sample(&mut rng);
                2.0 * w
            } else {
                0.0
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let z: Vec<f64> = (0..features).map(|_| StandardNormal.sample(&mut rng)).collect();
        let margin: f64 = z.iter().zip(&truth).map(|(a, b)| a * b).sum();
        let mut y = if margin >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < 0.1 {
            y = -y;
        }
        rows.push(z.into_iter().enumerate().collect::<Vec<_>>());
        labels.push(y);
    }
    LogisticDataset::new(CsrMatrix::from_rows(features, &rows)?, labels)
}

/// `count x dim` matrix of independent standard normal samples.
pub fn gaussian_samples(count: usize, dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng(seed);
    DMatrix::from_fn(count, dim, |_, _| StandardNormal.sample(&mut rng))
}

