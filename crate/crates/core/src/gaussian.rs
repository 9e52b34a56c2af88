//! Multivariate normal densities through Cholesky factors.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const RIDGE_FACTOR: f64 = 1e-8;

/// A normal distribution with a factorized covariance.
#[derive(Clone, Debug)]
pub(crate) struct Mvn {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `-(D/2) log 2π - (1/2) log|Σ|`
    log_norm: f64,
}

impl Mvn {
    /// Factorizes `cov`. A failed factorization is retried once with a ridge of
    /// `1e-8 · tr(Σ)/D` on the diagonal.
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Config(format!(
                "covariance is {}x{}, mean has length {d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let chol = match Cholesky::new(cov.clone()) {
            Some(c) => c,
            None => {
                let ridge = RIDGE_FACTOR * cov.trace() / d as f64;
                let mut ridged = cov.clone();
                for i in 0..d {
                    ridged[(i, i)] += ridge;
                }
                Cholesky::new(ridged).ok_or_else(|| {
                    Error::Numerical("covariance is not positive definite".into())
                })?
            }
        };
        let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        let log_norm = -0.5 * d as f64 * (2.0 * PI).ln() - log_det_half;
        Ok(Self {
            mean,
            chol,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let l = self.chol.l_dirty();
        // forward substitution on the lower factor; the upper triangle of
        // `l_dirty` holds garbage and is never read
        let mut z = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if d <= 16 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut quad = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= l[(i, j)] * z[j];
            }
            z[i] = s / l[(i, i)];
            quad += z[i] * z[i];
        }
        self.log_norm - 0.5 * quad
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// `log Σ exp(v)` without overflow.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
