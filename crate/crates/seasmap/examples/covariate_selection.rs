//! Covariate screening and backwards DIC selection on simulated data with
//! one real covariate, one decoy, and one duplicated column.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use seasmap::selection::{backwards_select, vif_prune, SelectionProblem};
use seasmap::stmodel::{FitSettings, Hyperparameters, Observation};

fn main() -> seasmap::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let locations: Vec<(f64, f64)> = (0..6)
        .map(|_| (44.0 + rng.gen::<f64>() * 6.0, -24.0 + rng.gen::<f64>() * 10.0))
        .collect();

    // Two replicate observations per (month, location) node so the noise
    // variance is identified; y depends on "rain" but not on "decoy".
    let mut observations = Vec::new();
    let mut rain = Vec::new();
    let mut decoy = Vec::new();
    for month in 1..=12usize {
        for loc in 0..locations.len() {
            let x = ((month as f64 - 2.0) / 12.0 * std::f64::consts::TAU).cos();
            for _ in 0..2 {
                let z: f64 = rng.sample(StandardNormal);
                let eps: f64 = rng.sample::<f64, _>(StandardNormal) * 0.3;
                observations.push(Observation { month, loc, y: -2.5 + 1.2 * x + eps });
                rain.push(x);
                decoy.push(z);
            }
        }
    }

    // The duplicate is perfectly collinear; VIF pruning removes it first.
    let columns = vec![
        ("rain".to_string(), rain.clone()),
        ("rain_copy".to_string(), rain.clone()),
        ("decoy".to_string(), decoy),
    ];
    let (screened, vif_trace) = vif_prune(&columns, 10.0)?;
    for (name, vif) in &vif_trace {
        println!("VIF removed {name} (vif = {vif:.1})");
    }
    println!("after screening: {screened:?}");

    let problem = SelectionProblem {
        observations: &observations,
        locations: &locations,
        columns: &columns,
        start: Hyperparameters::new(0.3, 0.3, 1.0, 0.3)?,
        settings: FitSettings { dic_draws: 100, max_iter: 100, ..FitSettings::default() },
    };
    let result = backwards_select(&problem, &screened)?;
    for (set, dic) in &result.dic_trace {
        println!("DIC {dic:.1} with {set:?}");
    }
    println!("final covariates: {:?}", result.final_covariates);

    // Build a design to show the final model shape.
    let design = Array2::from_elem((observations.len(), 1 + result.final_covariates.len()), 1.0);
    println!("final design is {} x {}", design.nrows(), design.ncols());
    Ok(())
}
