use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SpnError};

const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// A `d`-dimensional Gaussian with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl Gaussian {
    /// `cov` is row-major `d × d`. Fails unless it is symmetric and positive
    /// definite; nothing is regularized.
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(SpnError::Binding("Gaussian with empty mean".into()));
        }
        if cov.len() != d * d {
            return Err(SpnError::Binding(format!(
                "covariance has {} entries, expected {}",
                cov.len(),
                d * d
            )));
        }
        if mean.iter().chain(&cov).any(|v| !v.is_finite()) {
            return Err(SpnError::Binding("non-finite Gaussian parameter".into()));
        }
        let cov = DMatrix::from_row_slice(d, d, &cov);
        Self::from_parts(DVector::from_vec(mean), cov)
    }

    pub fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        for i in 0..d {
            for j in 0..i {
                let scale = cov[(i, j)].abs().max(cov[(j, i)].abs()).max(1.0);
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(SpnError::Binding("covariance is not symmetric".into()));
                }
            }
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| SpnError::Binding("covariance is not positive definite".into()))?
            .l();
        let log_det: f64 = (0..d).map(|i| chol[(i, i)].ln()).sum::<f64>() * 2.0;
        if !log_det.is_finite() || (0..d).any(|i| chol[(i, i)] <= 0.0) {
            return Err(SpnError::Binding("covariance is not positive definite".into()));
        }
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Gaussian { mean, cov, chol, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor of the covariance.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn cov_row_major(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d * d).map(|i| self.cov[(i / d, i % d)]).collect()
    }

    /// `L^{-1}(x - mean)`.
    pub fn whiten(&self, x: &[f64]) -> DVector<f64> {
        let centered = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, m)| a - m));
        self.chol
            .solve_lower_triangular(&centered)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let z = self.whiten(x);
        self.log_norm - 0.5 * z.norm_squared()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &self.mean + &self.chol * z;
        out.copy_from_slice(x.as_slice());
    }
}
