//! The log-linear spatiotemporal Gaussian model: an AR(1)-in-month latent
//! field with Matern-correlated spatial innovations, exact conjugate latent
//! inference, marginal-likelihood hyperparameter estimation, posterior
//! sampling, kriging prediction, and DIC.

mod archive;
mod covariance;
mod fit;
mod linalg;
mod posterior;

pub use archive::{read_model, write_model, MODEL_HEADER};
pub use covariance::{
    build_joint_covariance, haversine_km, matern_cov, spatial_matrix, temporal_cov,
    temporal_matrix,
};
pub use fit::{fit, FitSettings};
pub use linalg::chol_lower;
pub use posterior::{
    dic, latent_posterior, log_marginal_likelihood, predict_curves, sample_posterior,
    KrigingPredictor,
};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Standardization;

/// Model hyperparameters. The Matern smoothness is fixed at nu = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub sigma_e2: f64,
    pub sigma_f2: f64,
    pub kappa: f64,
    pub a: f64,
}

impl Hyperparameters {
    pub fn new(sigma_e2: f64, sigma_f2: f64, kappa: f64, a: f64) -> Result<Self> {
        if !(sigma_e2 > 0.0 && sigma_f2 > 0.0 && kappa > 0.0) {
            return Err(Error::Validation(format!(
                "hyperparameter variances and kappa must be positive \
                 (sigma_e2={sigma_e2}, sigma_f2={sigma_f2}, kappa={kappa})"
            )));
        }
        if !(a.abs() < 1.0) {
            return Err(Error::Validation(format!("|a| must be < 1, got {a}")));
        }
        Ok(Self { sigma_e2, sigma_f2, kappa, a })
    }

    /// Unconstrained coordinates (log variances, log kappa, atanh a) used by
    /// the optimizer.
    pub fn to_unconstrained(&self) -> [f64; 4] {
        [
            self.sigma_e2.ln(),
            self.sigma_f2.ln(),
            self.kappa.ln(),
            self.a.atanh(),
        ]
    }

    pub fn from_unconstrained(theta: &[f64]) -> Self {
        Hyperparameters {
            sigma_e2: theta[0].exp(),
            sigma_f2: theta[1].exp(),
            kappa: theta[2].exp(),
            a: theta[3].tanh(),
        }
    }
}

/// One model observation: a log proportion at a (month, location) node.
/// `loc` indexes into the model's location list; `month` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub month: usize,
    pub loc: usize,
    pub y: f64,
}

/// Flat latent index of a (month, location) node, month-major:
/// node(i, j) = (i - 1) * n_locations + j.
pub fn node_index(month: usize, loc: usize, n_locations: usize) -> usize {
    debug_assert!((1..=12).contains(&month));
    debug_assert!(loc < n_locations);
    (month - 1) * n_locations + loc
}

/// Exact Gaussian conditional of (beta, phi) given the observations.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    /// Posterior mean over (beta, phi), beta first.
    pub mean: Array1<f64>,
    /// Lower-triangular factor of the posterior covariance.
    pub cov_factor: Array2<f64>,
    /// The design matrix the posterior was computed with (rows align with
    /// the observations).
    pub design: Array2<f64>,
    pub n_coef: usize,
    pub n_locations: usize,
}

impl LatentPosterior {
    pub fn dim(&self) -> usize {
        self.n_coef + 12 * self.n_locations
    }

    /// Marginal posterior standard deviation of latent coordinate `i`.
    pub fn marginal_sd(&self, i: usize) -> f64 {
        let row = self.cov_factor.row(i);
        row.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A fitted model, immutable after `fit`.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub hyper: Hyperparameters,
    pub posterior: LatentPosterior,
    pub log_marginal: f64,
    pub dic: f64,
    pub locations: Vec<(f64, f64)>,
    /// Months with at least one observation.
    pub months_observed: Vec<usize>,
    pub stationary_ar1: bool,
    pub beta_prior_var: f64,
    /// Covariate column names matching design columns 1.. (0 is intercept).
    pub covariates: Vec<String>,
    pub standardization: Vec<Standardization>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyper_validation() {
        assert!(Hyperparameters::new(0.1, 0.1, 1.0, 0.5).is_ok());
        assert!(Hyperparameters::new(0.0, 0.1, 1.0, 0.5).is_err());
        assert!(Hyperparameters::new(0.1, 0.1, 1.0, 1.0).is_err());
        assert!(Hyperparameters::new(0.1, 0.1, -1.0, 0.0).is_err());
    }

    #[test]
    fn unconstrained_roundtrip() {
        let h = Hyperparameters::new(0.326, 0.245, 3.163, 0.756).unwrap();
        let back = Hyperparameters::from_unconstrained(&h.to_unconstrained());
        assert!((h.sigma_e2 - back.sigma_e2).abs() < 1e-12);
        assert!((h.a - back.a).abs() < 1e-12);
    }

    #[test]
    fn node_index_month_major() {
        assert_eq!(node_index(1, 0, 5), 0);
        assert_eq!(node_index(2, 0, 5), 5);
        assert_eq!(node_index(12, 4, 5), 59);
    }
}
