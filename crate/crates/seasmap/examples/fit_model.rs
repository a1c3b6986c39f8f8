//! Fit the spatiotemporal model to simulated observations and inspect the
//! recovered hyperparameters, log marginal likelihood, and DIC.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use seasmap::stmodel::{
    build_joint_covariance, chol_lower, fit, node_index, FitSettings, Hyperparameters, Observation,
};

fn main() -> seasmap::Result<()> {
    let truth = Hyperparameters::new(0.3, 0.5, 2.0, 0.7)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let locations: Vec<(f64, f64)> = (0..8)
        .map(|_| (44.0 + rng.gen::<f64>() * 6.0, -24.0 + rng.gen::<f64>() * 10.0))
        .collect();

    // y = intercept + phi + eps at every (month, location) node.
    let n = locations.len();
    let cov = build_joint_covariance(&locations, &truth, false)?;
    let l = chol_lower(&cov, "simulation covariance")?;
    let eta: ndarray::Array1<f64> = (0..12 * n).map(|_| rng.sample(StandardNormal)).collect();
    let phi = l.dot(&eta);
    let mut observations = Vec::new();
    for month in 1..=12usize {
        for loc in 0..n {
            let eps: f64 = rng.sample::<f64, _>(StandardNormal) * truth.sigma_e2.sqrt();
            observations.push(Observation {
                month,
                loc,
                y: -2.5 + phi[node_index(month, loc, n)] + eps,
            });
        }
    }
    let design = Array2::from_elem((observations.len(), 1), 1.0);

    let start = Hyperparameters::new(1.0, 1.0, 1.0, 0.0)?;
    let model = fit(&observations, &design, &locations, &start, &FitSettings::default())?;
    println!(
        "truth:  sigma_e2={:.3} sigma_f2={:.3} kappa={:.3} a={:.3}",
        truth.sigma_e2, truth.sigma_f2, truth.kappa, truth.a
    );
    println!(
        "fitted: sigma_e2={:.3} sigma_f2={:.3} kappa={:.3} a={:.3}",
        model.hyper.sigma_e2, model.hyper.sigma_f2, model.hyper.kappa, model.hyper.a
    );
    println!("log marginal = {:.2}, DIC = {:.2}", model.log_marginal, model.dic);
    println!(
        "posterior intercept = {:.3} +- {:.3}",
        model.posterior.mean[0],
        model.posterior.marginal_sd(0)
    );
    Ok(())
}
