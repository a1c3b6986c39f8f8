//! Full pipeline on synthetic data: synth -> prep -> select -> fit ->
//! features -> render, all inside target/examples/end_to_end.

use std::path::PathBuf;

use seasmap::pipeline::{
    cmd_features, cmd_fit, cmd_prep, cmd_render, cmd_select, cmd_synth, PipelineConfig,
};
use seasmap::synth::SynthSpec;

fn main() -> seasmap::Result<()> {
    let outdir = PathBuf::from("target/examples/end_to_end");
    let config = PipelineConfig {
        facilities: outdir.join("facilities.csv"),
        covariates: outdir.join("covariates.csv"),
        api_grid: outdir.join("api.csv"),
        outdir: outdir.clone(),
        samples: 50,
        seed: 11,
        single_pass: true,
        dic_draws: 50,
        max_iter: 100,
        ..PipelineConfig::default()
    };

    let spec = SynthSpec {
        n_locations: 12,
        years: 3,
        seed: 11,
        sigma_e2: 0.05,
        sigma_f2: 0.1,
        annual_scale: 2000.0,
        covariates: vec![seasmap::synth::CovariateGen {
            name: "rain".into(),
            beta: 2.0,
            peak_month: 2.0,
            amplitude: 1.0,
            spatial_weight: 0.4,
        }],
        ..SynthSpec::default()
    };
    cmd_synth(&config, &spec)?;

    let prep = cmd_prep(&config)?;
    println!(
        "prep: {} facilities, {} dropped, {} outliers",
        prep.n_facilities, prep.n_dropped, prep.n_outliers
    );

    let report = cmd_select(&config)?;
    println!("select: final covariates {:?}", report.final_covariates);

    let archive = cmd_fit(&config, None)?;
    println!("fit: wrote {}", archive.display());

    let features = cmd_features(&config)?;
    println!("features: {} targets summarized", features.n_targets);

    let maps = cmd_render(&config, &features.features_path, &["entropy".into(), "category".into()])?;
    let curves = cmd_render(&config, &features.mpi_path, &[])?;
    println!("render: {} maps, {} curve plots in {}", maps.len(), curves.len(), outdir.display());
    Ok(())
}
