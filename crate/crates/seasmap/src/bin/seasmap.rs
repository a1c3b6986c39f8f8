//! Thin CLI over the pipeline: prep, select, fit, features, render, synth.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seasmap::pipeline::{
    cmd_features, cmd_fit, cmd_prep, cmd_render, cmd_select, cmd_synth, PipelineConfig,
};
use seasmap::synth::{CovariateGen, SynthSpec};
use seasmap::Error;

#[derive(Parser)]
#[command(name = "seasmap", about = "Seasonality mapping from facility case counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand; each overrides the config file.
#[derive(Args)]
struct Common {
    /// Path to a key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Facility case-count CSV.
    #[arg(long)]
    facilities: Option<PathBuf>,
    /// Long-format covariate grid CSV.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// API grid CSV (lon,lat,api).
    #[arg(long)]
    api: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Prediction target CSV (lon,lat).
    #[arg(long)]
    targets: Option<PathBuf>,
    /// RNG seed shared by all seeded steps.
    #[arg(long)]
    seed: Option<u64>,
    /// Posterior sample count for the features step.
    #[arg(long)]
    samples: Option<usize>,
    /// Log-proportion outlier threshold.
    #[arg(long)]
    log_outlier: Option<f64>,
    /// VIF pruning threshold.
    #[arg(long)]
    vif_threshold: Option<f64>,
    /// Von Mises escalation error threshold.
    #[arg(long)]
    error_threshold: Option<f64>,
    /// Cyclic covariate lags added to every covariate.
    #[arg(long)]
    max_lag: Option<u32>,
    /// Worker pool size (SEASMAP_THREADS overrides).
    #[arg(long)]
    threads: Option<usize>,
    /// Use the stationary AR(1) month covariance.
    #[arg(long)]
    stationary_ar1: bool,
    /// Nelder-Mead iteration cap per fit.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Posterior draws per DIC evaluation.
    #[arg(long)]
    dic_draws: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.facilities {
            config.facilities = v.clone();
        }
        if let Some(v) = &self.covariates {
            config.covariates = v.clone();
        }
        if let Some(v) = &self.api {
            config.api_grid = v.clone();
        }
        if let Some(v) = &self.outdir {
            config.outdir = v.clone();
        }
        if let Some(v) = &self.targets {
            config.targets = Some(v.clone());
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.samples {
            config.samples = v;
        }
        if let Some(v) = self.log_outlier {
            config.log_outlier = v;
        }
        if let Some(v) = self.vif_threshold {
            config.vif_threshold = v;
        }
        if let Some(v) = self.error_threshold {
            config.error_threshold = v;
        }
        if let Some(v) = self.max_lag {
            config.max_lag = v;
        }
        if let Some(v) = self.threads {
            config.threads = v;
        }
        if self.stationary_ar1 {
            config.stationary_ar1 = true;
        }
        if let Some(v) = self.max_iter {
            config.max_iter = v;
        }
        if let Some(v) = self.dic_draws {
            config.dic_draws = v;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Reduce raw counts to prepared log-proportion observations.
    Prep(Common),
    /// Select covariates by VIF pruning and backwards DIC search.
    Select {
        #[command(flatten)]
        common: Common,
        /// One backwards pass over the full training set, no halving.
        #[arg(long)]
        single_pass: bool,
    },
    /// Fit the model on all facilities and write the model archive.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Covariates to fit, overriding the selection report.
        #[arg(long, value_delimiter = ',')]
        use_covariates: Option<Vec<String>>,
    },
    /// Derive seasonality features and MPI from posterior samples.
    Features(Common),
    /// Render SVG maps or curve plots from a features or MPI CSV.
    Render {
        #[command(flatten)]
        common: Common,
        /// Input CSV (features or MPI).
        #[arg(long)]
        input: PathBuf,
        /// Feature columns to map (default: all non-coordinate columns).
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<String>>,
    },
    /// Generate a synthetic dataset with a known truth record.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 30)]
        n_locations: usize,
        #[arg(long, default_value_t = 3)]
        years: usize,
        #[arg(long, default_value_t = 600.0)]
        annual_scale: f64,
        /// Comma list of name:beta:peak_month covariate generators.
        #[arg(long, value_delimiter = ',')]
        gen_covariates: Option<Vec<String>>,
        #[arg(long, default_value_t = 0.0)]
        gap_fraction: f64,
    },
}

fn parse_generator(text: &str) -> Result<CovariateGen, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Validation(format!(
            "covariate generator must be name:beta:peak_month, got {text:?}"
        )));
    }
    let number = |field: &str| {
        field
            .parse::<f64>()
            .map_err(|_| Error::Validation(format!("not a number in generator spec: {field:?}")))
    };
    Ok(CovariateGen {
        name: parts[0].to_string(),
        beta: number(parts[1])?,
        peak_month: number(parts[2])?,
        amplitude: 1.0,
        spatial_weight: 0.4,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Prep(common) => {
            let config = common.config()?;
            let summary = cmd_prep(&config)?;
            println!(
                "prepared {} facilities ({} dropped, {} outlier observations removed)",
                summary.n_facilities, summary.n_dropped, summary.n_outliers
            );
        }
        Command::Select { common, single_pass } => {
            let mut config = common.config()?;
            if single_pass {
                config.single_pass = true;
            }
            let report = cmd_select(&config)?;
            println!("selected covariates: {}", report.final_covariates.join(", "));
        }
        Command::Fit { common, use_covariates } => {
            let config = common.config()?;
            let path = cmd_fit(&config, use_covariates.as_deref())?;
            println!("wrote model archive {}", path.display());
        }
        Command::Features(common) => {
            let config = common.config()?;
            let summary = cmd_features(&config)?;
            for warning in &summary.skipped {
                eprintln!("{warning}");
            }
            println!(
                "wrote features for {} targets: {} and {}",
                summary.n_targets,
                summary.features_path.display(),
                summary.mpi_path.display()
            );
        }
        Command::Render { common, input, columns } => {
            let config = common.config()?;
            let written = cmd_render(&config, &input, &columns.unwrap_or_default())?;
            println!("wrote {} SVG file(s)", written.len());
        }
        Command::Synth {
            common,
            n_locations,
            years,
            annual_scale,
            gen_covariates,
            gap_fraction,
        } => {
            let config = common.config()?;
            let mut spec = SynthSpec {
                n_locations,
                years,
                annual_scale,
                gap_fraction,
                seed: config.seed,
                ..SynthSpec::default()
            };
            if let Some(gens) = gen_covariates {
                spec.covariates = gens
                    .iter()
                    .map(|g| parse_generator(g))
                    .collect::<Result<_, _>>()?;
            }
            let written = cmd_synth(&config, &spec)?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
