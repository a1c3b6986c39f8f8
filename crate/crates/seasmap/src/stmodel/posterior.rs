//! Exact latent inference, marginal likelihood, DIC, posterior sampling,
//! and kriging prediction.

use ndarray::{s, Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::curve::ProportionCurve;
use crate::error::{Error, Result};

use super::covariance::{
    build_joint_covariance, haversine_km, matern_cov, temporal_matrix,
};
use super::linalg::{chol_inverse, chol_lower, logdet_from_factor, solve_lower};
use super::{node_index, FittedModel, Hyperparameters, LatentPosterior, Observation};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn check_observations(
    observations: &[Observation],
    design: &Array2<f64>,
    n_locations: usize,
) -> Result<()> {
    if design.nrows() != observations.len() {
        return Err(Error::Validation(format!(
            "design has {} rows for {} observations",
            design.nrows(),
            observations.len()
        )));
    }
    for o in observations {
        if !(1..=12).contains(&o.month) || o.loc >= n_locations {
            return Err(Error::Validation(format!(
                "observation {o:?} does not map to a node (n_locations = {n_locations})"
            )));
        }
        if !o.y.is_finite() {
            return Err(Error::Validation(format!("non-finite observation {o:?}")));
        }
    }
    Ok(())
}

/// Exact Gaussian conditional of (beta, phi) given the observations, under
/// beta ~ N(0, beta_prior_var I), phi ~ N(0, A (x) M), eps ~ N(0, sigma_e2 I).
/// Computed from the joint precision via dense Cholesky algebra.
pub fn latent_posterior(
    observations: &[Observation],
    design: &Array2<f64>,
    locations: &[(f64, f64)],
    hyper: &Hyperparameters,
    beta_prior_var: f64,
    stationary: bool,
) -> Result<LatentPosterior> {
    let n = locations.len();
    let m = design.ncols();
    let d = m + 12 * n;
    check_observations(observations, design, n)?;

    let prior_cov = build_joint_covariance(locations, hyper, stationary)?;

    if observations.is_empty() {
        // No data: posterior is the prior.
        let mut cov = Array2::zeros((d, d));
        for i in 0..m {
            cov[[i, i]] = beta_prior_var;
        }
        cov.slice_mut(s![m.., m..]).assign(&prior_cov);
        let cov_factor = chol_lower(&cov, "prior covariance")?;
        return Ok(LatentPosterior {
            mean: Array1::zeros(d),
            cov_factor,
            design: design.clone(),
            n_coef: m,
            n_locations: n,
        });
    }

    let prior_precision = chol_inverse(&prior_cov, "joint field covariance")?;

    let mut precision = Array2::<f64>::zeros((d, d));
    for i in 0..m {
        precision[[i, i]] = 1.0 / beta_prior_var;
    }
    precision.slice_mut(s![m.., m..]).assign(&prior_precision);

    let inv_e2 = 1.0 / hyper.sigma_e2;
    // beta block: X^T X / sigma_e2.
    let xtx = design.t().dot(design);
    precision
        .slice_mut(s![..m, ..m])
        .scaled_add(inv_e2, &xtx);

    let mut rhs = Array1::<f64>::zeros(d);
    for (r, o) in observations.iter().enumerate() {
        let k = m + node_index(o.month, o.loc, n);
        precision[[k, k]] += inv_e2;
        for c in 0..m {
            let x = design[[r, c]];
            precision[[c, k]] += x * inv_e2;
            precision[[k, c]] += x * inv_e2;
            rhs[c] += x * o.y * inv_e2;
        }
        rhs[k] += o.y * inv_e2;
    }

    let cov = chol_inverse(&precision, "posterior precision")?;
    let mean = cov.dot(&rhs);
    let cov_factor = chol_lower(&cov, "posterior covariance")?;

    Ok(LatentPosterior {
        mean,
        cov_factor,
        design: design.clone(),
        n_coef: m,
        n_locations: n,
    })
}

/// Precomputed pieces of the marginal likelihood that do not depend on the
/// hyperparameters, so the optimizer only rebuilds covariance entries.
pub(crate) struct MarginalContext {
    months: Vec<usize>,
    locs: Vec<usize>,
    y: Array1<f64>,
    /// beta_prior_var * X X^T.
    gram: Array2<f64>,
    /// Pairwise great-circle distances between training locations.
    dists: Array2<f64>,
}

impl MarginalContext {
    pub fn new(
        observations: &[Observation],
        design: &Array2<f64>,
        locations: &[(f64, f64)],
        beta_prior_var: f64,
    ) -> Result<Self> {
        check_observations(observations, design, locations.len())?;
        let n = locations.len();
        let mut dists = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let h = haversine_km(locations[i], locations[j]);
                if h == 0.0 {
                    return Err(Error::Numerical(format!(
                        "duplicate locations at indices {i} and {j}"
                    )));
                }
                dists[[i, j]] = h;
                dists[[j, i]] = h;
            }
        }
        let mut gram = design.dot(&design.t());
        gram *= beta_prior_var;
        Ok(MarginalContext {
            months: observations.iter().map(|o| o.month).collect(),
            locs: observations.iter().map(|o| o.loc).collect(),
            y: observations.iter().map(|o| o.y).collect(),
            gram,
            dists,
        })
    }

    /// Log density of y under N(0, X V_beta X^T + C_phi + sigma_e2 I).
    pub fn log_marginal(&self, hyper: &Hyperparameters, stationary: bool) -> Result<f64> {
        let n_obs = self.y.len();
        if n_obs == 0 {
            return Ok(0.0);
        }
        let a_mat = temporal_matrix(hyper.a, stationary);
        let n = self.dists.nrows();
        let mut m_mat = Array2::zeros((n, n));
        for i in 0..n {
            m_mat[[i, i]] = hyper.sigma_f2;
            for j in (i + 1)..n {
                let c = matern_cov(self.dists[[i, j]], hyper.sigma_f2, hyper.kappa);
                m_mat[[i, j]] = c;
                m_mat[[j, i]] = c;
            }
        }

        let mut s_mat = self.gram.clone();
        for r in 0..n_obs {
            for c in 0..n_obs {
                s_mat[[r, c]] +=
                    a_mat[[self.months[r] - 1, self.months[c] - 1]] * m_mat[[self.locs[r], self.locs[c]]];
            }
            s_mat[[r, r]] += hyper.sigma_e2;
        }

        let l = chol_lower(&s_mat, "marginal covariance")?;
        let u = solve_lower(&l, &self.y)?;
        let quad: f64 = u.iter().map(|v| v * v).sum();
        Ok(-0.5 * (n_obs as f64 * LN_2PI + logdet_from_factor(&l) + quad))
    }
}

/// Exact log marginal likelihood of the observations given hyperparameters.
pub fn log_marginal_likelihood(
    observations: &[Observation],
    design: &Array2<f64>,
    locations: &[(f64, f64)],
    hyper: &Hyperparameters,
    beta_prior_var: f64,
    stationary: bool,
) -> Result<f64> {
    MarginalContext::new(observations, design, locations, beta_prior_var)?
        .log_marginal(hyper, stationary)
}

/// Joint Gaussian draws of (beta, phi) from a latent posterior, reproducible
/// by seed.
///
/// Each draw uses its own ChaCha stream, with the field noise drawn before
/// the coefficient noise. Two posteriors over the same field layout then
/// share their field noise draw by draw even when their coefficient counts
/// differ, which acts as common random numbers in DIC comparisons.
pub fn sample_latent(posterior: &LatentPosterior, n_samples: usize, seed: u64) -> Vec<Array1<f64>> {
    let d = posterior.mean.len();
    let m = posterior.n_coef;
    (0..n_samples)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut eta = Array1::zeros(d);
            for i in m..d {
                eta[i] = rng.sample(StandardNormal);
            }
            for i in 0..m {
                eta[i] = rng.sample(StandardNormal);
            }
            &posterior.mean + &posterior.cov_factor.dot(&eta)
        })
        .collect()
}

/// Posterior draws from a fitted model. The pipeline default is 100.
pub fn sample_posterior(model: &FittedModel, n_samples: usize, seed: u64) -> Vec<Array1<f64>> {
    sample_latent(&model.posterior, n_samples, seed)
}

fn gaussian_deviance(
    observations: &[Observation],
    design: &Array2<f64>,
    z: &Array1<f64>,
    n_coef: usize,
    n_locations: usize,
    sigma_e2: f64,
) -> f64 {
    let n_obs = observations.len();
    let mut rss = 0.0;
    for (r, o) in observations.iter().enumerate() {
        let mut fitted = z[n_coef + node_index(o.month, o.loc, n_locations)];
        for c in 0..n_coef {
            fitted += design[[r, c]] * z[c];
        }
        rss += (o.y - fitted).powi(2);
    }
    n_obs as f64 * (LN_2PI + sigma_e2.ln()) + rss / sigma_e2
}

/// Deviance Information Criterion: mean posterior deviance plus the
/// effective-parameter penalty p_D, from `n_draws` seeded posterior draws.
pub fn dic(
    observations: &[Observation],
    design: &Array2<f64>,
    posterior: &LatentPosterior,
    hyper: &Hyperparameters,
    n_draws: usize,
    seed: u64,
) -> f64 {
    let draws = sample_latent(posterior, n_draws, seed);
    let mean_dev = draws
        .iter()
        .map(|z| {
            gaussian_deviance(
                observations,
                design,
                z,
                posterior.n_coef,
                posterior.n_locations,
                hyper.sigma_e2,
            )
        })
        .sum::<f64>()
        / n_draws as f64;
    let dev_at_mean = gaussian_deviance(
        observations,
        design,
        &posterior.mean,
        posterior.n_coef,
        posterior.n_locations,
        hyper.sigma_e2,
    );
    // DIC = mean deviance + p_D, with p_D = mean deviance - deviance(mean).
    2.0 * mean_dev - dev_at_mean
}

/// Spatial kriging weights from a fitted model's training locations to a
/// fixed set of targets. The AR(1) factor cancels in the separable
/// conditional mean, so the weights are purely spatial and shared by all
/// months.
pub struct KrigingPredictor {
    weights: Array2<f64>,
    n_loc: usize,
    n_coef: usize,
}

impl KrigingPredictor {
    pub fn new(model: &FittedModel, targets: &[(f64, f64)]) -> Result<Self> {
        let n = model.locations.len();
        let t = targets.len();
        let m_tt = super::covariance::spatial_matrix(
            &model.locations,
            model.hyper.sigma_f2,
            model.hyper.kappa,
        )?;
        let l = chol_lower(&m_tt, "training spatial covariance")?;

        let mut weights = Array2::zeros((t, n));
        'target: for (k, &tgt) in targets.iter().enumerate() {
            let mut cross = Array1::zeros(n);
            for j in 0..n {
                let h = haversine_km(tgt, model.locations[j]);
                if h == 0.0 {
                    // Collocated with a training location: exact interpolation.
                    weights[[k, j]] = 1.0;
                    continue 'target;
                }
                cross[j] = matern_cov(h, model.hyper.sigma_f2, model.hyper.kappa);
            }
            // Solve M_tt w = cross via the factor: L u = cross, L^T w = u.
            let u = solve_lower(&l, &cross)?;
            let w = solve_upper_from_lower(&l, &u)?;
            weights.row_mut(k).assign(&w);
        }
        Ok(KrigingPredictor {
            weights,
            n_loc: n,
            n_coef: model.posterior.n_coef,
        })
    }

    /// Extends one latent draw to the targets and returns a normalized
    /// proportion curve per target. `design_at_targets` rows are month-major
    /// over (month, target).
    pub fn predict(
        &self,
        draw: &Array1<f64>,
        design_at_targets: &Array2<f64>,
    ) -> Result<Vec<ProportionCurve>> {
        let t = self.weights.nrows();
        let m = self.n_coef;
        if design_at_targets.nrows() != 12 * t || design_at_targets.ncols() != m {
            return Err(Error::Validation(format!(
                "design_at_targets is {}x{}, expected {}x{m}",
                design_at_targets.nrows(),
                design_at_targets.ncols(),
                12 * t
            )));
        }
        let beta = draw.slice(s![..m]);
        let mut curves = Vec::with_capacity(t);
        for k in 0..t {
            let mut log_values = [0.0f64; 12];
            for month in 1..=12usize {
                let row = (month - 1) * t + k;
                let mut v = design_at_targets.row(row).dot(&beta);
                for j in 0..self.n_loc {
                    v += self.weights[[k, j]] * draw[m + node_index(month, j, self.n_loc)];
                }
                log_values[month - 1] = v;
            }
            let max = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut weights = [0.0f64; 12];
            for (w, lv) in weights.iter_mut().zip(&log_values) {
                *w = (lv - max).exp();
            }
            curves.push(ProportionCurve::from_weights(&weights)?);
        }
        Ok(curves)
    }
}

fn solve_upper_from_lower(l: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    // Back substitution with L^T, avoiding an explicit transpose copy.
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let mut v = x[i];
        for j in (i + 1)..n {
            v -= l[[j, i]] * x[j];
        }
        if l[[i, i]] == 0.0 {
            return Err(Error::Numerical("singular triangular factor".into()));
        }
        x[i] = v / l[[i, i]];
    }
    Ok(x)
}

/// One-call kriging prediction for a single draw.
pub fn predict_curves(
    model: &FittedModel,
    targets: &[(f64, f64)],
    design_at_targets: &Array2<f64>,
    draw: &Array1<f64>,
) -> Result<Vec<ProportionCurve>> {
    KrigingPredictor::new(model, targets)?.predict(draw, design_at_targets)
}
