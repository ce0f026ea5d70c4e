//! Gaussian mixtures with cached precision matrices.
//!
//! Every density, score and posterior in the crate goes through [`Mixture`];
//! weights may be zero (a tilted prompt can switch components off), in which
//! case the component contributes `-inf` to every log-sum-exp.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug)]
pub struct Gaussian {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_det: f64,
}

impl Gaussian {
    /// Fails when the covariance is not symmetric positive-definite.
    pub fn new(weight: f64, mean: DVector<f64>, covariance: DMatrix<f64>) -> Option<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return None;
        }
        let scale = covariance.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 * scale {
                    return None;
                }
            }
        }
        let chol = covariance.clone().cholesky()?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return None;
        }
        let precision = chol.inverse();
        Some(Self {
            weight,
            mean,
            covariance,
            precision,
            log_det,
        })
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `log N(x; mean, covariance)`, without the weight.
    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let maha = diff.dot(&(&self.precision * &diff));
        -0.5 * (self.mean.len() as f64 * LN_2PI + self.log_det + maha)
    }

    fn log_weighted_pdf(&self, x: &DVector<f64>) -> f64 {
        if self.weight > 0.0 {
            self.weight.ln() + self.log_pdf(x)
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mixture {
    pub dim: usize,
    pub components: Vec<Gaussian>,
}

impl Mixture {
    pub fn new(dim: usize, components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::BadParameter("mixture has no components".into()));
        }
        if components.iter().any(|c| c.mean.len() != dim) {
            return Err(Error::BadParameter("component dimension mismatch".into()));
        }
        Ok(Self { dim, components })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Per-component `log w_k + log N(x; mu_k, Sigma_k)`.
    pub fn component_log_terms(&self, x: &DVector<f64>) -> Vec<f64> {
        self.components.iter().map(|c| c.log_weighted_pdf(x)).collect()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        log_sum_exp(&self.component_log_terms(x))
    }

    /// Posterior component probabilities at `x`.
    pub fn responsibilities(&self, x: &DVector<f64>) -> Vec<f64> {
        let terms = self.component_log_terms(x);
        let lse = log_sum_exp(&terms);
        terms.iter().map(|t| (t - lse).exp()).collect()
    }

    /// Exact `grad_x log p(x)`.
    pub fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        let resp = self.responsibilities(x);
        let mut out = DVector::zeros(self.dim);
        for (c, r) in self.components.iter().zip(resp) {
            if r > 0.0 {
                out += (&c.precision * (&c.mean - x)) * r;
            }
        }
        out
    }
}

/// Stable `log sum exp`; returns `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}
