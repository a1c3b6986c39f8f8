//! The command pipeline behind the CLI: prep, select, fit, features,
//! render, and synth, each a pure function of (input files, config, seed)
//! so reruns reproduce outputs byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::{
    apply_offset_and_rescale, build_design, filter_outliers, load_facilities,
    reduce_to_series, CovariateStack, FacilitySeries, LOG_OUTLIER_THRESHOLD,
};
use crate::render::{render_curve_plots, render_feature_map, RenderStyle};
use crate::seasonal::{
    assign_categories, derive_features, quantile, summarize_samples, SeasonFeatures,
    UncertaintySummary, ERROR_THRESHOLD,
};
use crate::selection::{
    backwards_select, split_train_test, split_training_halves, vif_prune, SelectionProblem,
    SelectionReport, TEST_FRACTION, VIF_THRESHOLD,
};
use crate::stmodel::{
    fit, read_model, sample_posterior, write_model, FitSettings, FittedModel, Hyperparameters,
    KrigingPredictor, Observation,
};
use crate::synth::{generate, SynthSpec};

/// Everything the commands need, from a `key = value` config file plus
/// command-line overrides.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub facilities: PathBuf,
    pub covariates: PathBuf,
    pub api_grid: PathBuf,
    pub outdir: PathBuf,
    /// Optional prediction-target CSV (`lon,lat`); facilities when absent.
    pub targets: Option<PathBuf>,
    pub log_outlier: f64,
    pub vif_threshold: f64,
    pub error_threshold: f64,
    pub stationary_ar1: bool,
    pub single_pass: bool,
    pub samples: usize,
    pub seed: u64,
    /// Cyclic covariate lags 1..=max_lag added to every covariate.
    pub max_lag: u32,
    pub threads: usize,
    pub dic_draws: usize,
    pub max_iter: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            facilities: PathBuf::from("facilities.csv"),
            covariates: PathBuf::from("covariates.csv"),
            api_grid: PathBuf::from("api.csv"),
            outdir: PathBuf::from("out"),
            targets: None,
            log_outlier: LOG_OUTLIER_THRESHOLD,
            vif_threshold: VIF_THRESHOLD,
            error_threshold: ERROR_THRESHOLD,
            stationary_ar1: false,
            single_pass: false,
            samples: 100,
            seed: 0,
            max_lag: 0,
            threads: 1,
            dic_draws: 200,
            max_iter: 200,
        }
    }
}

impl PipelineConfig {
    /// Reads a flat `key = value` file; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("expected key = value, got {raw:?}"),
            })?;
            config
                .apply(key.trim(), value.trim())
                .map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Sets one key; command-line arguments call this after `from_file`, so
    /// they override the file.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Validation(format!("key {key}: expected {what}, got {value:?}"));
        match key {
            "facilities" => self.facilities = PathBuf::from(value),
            "covariates" => self.covariates = PathBuf::from(value),
            "api" => self.api_grid = PathBuf::from(value),
            "outdir" => self.outdir = PathBuf::from(value),
            "targets" => self.targets = Some(PathBuf::from(value)),
            "log_outlier" => self.log_outlier = value.parse().map_err(|_| bad("a number"))?,
            "vif_threshold" => self.vif_threshold = value.parse().map_err(|_| bad("a number"))?,
            "error_threshold" => {
                self.error_threshold = value.parse().map_err(|_| bad("a number"))?
            }
            "stationary_ar1" => self.stationary_ar1 = parse_bool(value).ok_or_else(|| bad("a bool"))?,
            "single_pass" => self.single_pass = parse_bool(value).ok_or_else(|| bad("a bool"))?,
            "samples" => self.samples = value.parse().map_err(|_| bad("a count"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("an integer"))?,
            "max_lag" => self.max_lag = value.parse().map_err(|_| bad("a count"))?,
            "threads" => self.threads = value.parse().map_err(|_| bad("a count"))?,
            "dic_draws" => self.dic_draws = value.parse().map_err(|_| bad("a count"))?,
            "max_iter" => self.max_iter = value.parse().map_err(|_| bad("a count"))?,
            _ => return Err(Error::Validation(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.vif_threshold > 0.0
            && self.error_threshold > 0.0
            && self.samples >= 1
            && self.dic_draws >= 1
            && self.max_iter >= 1;
        if !ok {
            return Err(Error::Validation(
                "thresholds must be positive and counts at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Worker count for per-draw prediction; `SEASMAP_THREADS` overrides the
    /// config key.
    pub fn effective_threads(&self) -> usize {
        resolve_threads(self.threads, std::env::var("SEASMAP_THREADS").ok().as_deref())
    }

    fn fit_settings(&self) -> FitSettings {
        FitSettings {
            stationary_ar1: self.stationary_ar1,
            max_iter: self.max_iter,
            dic_draws: self.dic_draws,
            dic_seed: self.seed,
            ..FitSettings::default()
        }
    }

    fn lags(&self) -> Vec<u32> {
        // Lag 0 is the unlagged column itself.
        (0..=self.max_lag).collect()
    }
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

fn resolve_threads(config_threads: usize, env_value: Option<&str>) -> usize {
    env_value
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(config_threads)
        .max(1)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Hyperparameter starting point shared by every fit in the pipeline.
fn default_start() -> Hyperparameters {
    Hyperparameters::new(0.3, 0.3, 1.0, 0.5).expect("valid start")
}

// ---------------------------------------------------------------------------
// prep

/// One prepared facility and its retained log-proportion observations.
#[derive(Debug, Clone)]
pub struct PreparedFacility {
    pub facility_id: String,
    pub location: (f64, f64),
    pub zero_case: bool,
}

/// Prepared dataset shared by select/fit: facilities plus observations as
/// (facility index, month, log proportion).
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub facilities: Vec<PreparedFacility>,
    pub observations: Vec<(usize, usize, f64)>,
}

const PREPARED_OBSERVATIONS: &str = "prepared_observations.csv";
const PREPARED_FACILITIES: &str = "prepared_facilities.csv";
const PREP_REPORT: &str = "prep_report.txt";
const SELECTION_REPORT: &str = "selection.txt";
const MODEL_ARCHIVE: &str = "model.seasmap";
const FEATURES_CSV: &str = "features.csv";
const MPI_CSV: &str = "mpi.csv";
const FEATURES_LOG: &str = "features_log.txt";

impl PreparedData {
    pub fn load(outdir: &Path) -> Result<Self> {
        let fac_text = read_text(&outdir.join(PREPARED_FACILITIES))?;
        let mut facilities = Vec::new();
        for (i, line) in fac_text.lines().enumerate().skip(1) {
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse {
                path: PREPARED_FACILITIES.into(),
                line: i + 1,
                message: format!("malformed row {line:?}"),
            };
            if parts.len() != 4 {
                return Err(bad());
            }
            facilities.push(PreparedFacility {
                facility_id: parts[0].to_string(),
                location: (
                    parts[1].parse().map_err(|_| bad())?,
                    parts[2].parse().map_err(|_| bad())?,
                ),
                zero_case: parts[3] == "true",
            });
        }
        let obs_text = read_text(&outdir.join(PREPARED_OBSERVATIONS))?;
        let mut observations = Vec::new();
        for (i, line) in obs_text.lines().enumerate().skip(1) {
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse {
                path: PREPARED_OBSERVATIONS.into(),
                line: i + 1,
                message: format!("malformed row {line:?}"),
            };
            if parts.len() != 3 {
                return Err(bad());
            }
            let id = parts[0];
            let idx = facilities
                .iter()
                .position(|f| f.facility_id == id)
                .ok_or_else(bad)?;
            observations.push((
                idx,
                parts[1].parse().map_err(|_| bad())?,
                parts[2].parse().map_err(|_| bad())?,
            ));
        }
        Ok(PreparedData { facilities, observations })
    }

    fn write(&self, outdir: &Path) -> Result<()> {
        let mut fac = String::from("facility_id,lon,lat,zero_case\n");
        for f in &self.facilities {
            fac.push_str(&format!(
                "{},{},{},{}\n",
                f.facility_id, f.location.0, f.location.1, f.zero_case
            ));
        }
        write_text(&outdir.join(PREPARED_FACILITIES), &fac)?;
        let mut obs = String::from("facility_id,month,log_p\n");
        for &(idx, month, y) in &self.observations {
            obs.push_str(&format!(
                "{},{month},{y}\n",
                self.facilities[idx].facility_id
            ));
        }
        write_text(&outdir.join(PREPARED_OBSERVATIONS), &obs)
    }
}

/// Outcome counts of `cmd_prep`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrepSummary {
    pub n_facilities: usize,
    pub n_dropped: usize,
    pub n_outliers: usize,
}

/// Loads the raw facility CSV, reduces it to per-facility proportion
/// curves, applies the offset and log transform, drops log-proportion
/// outliers, and writes the prepared dataset plus a drop report.
pub fn cmd_prep(config: &PipelineConfig) -> Result<PrepSummary> {
    let records = load_facilities(&config.facilities)?;
    let reduced = reduce_to_series(&records);
    let stack = load_stack(config)?;

    let mut report = String::new();
    for (id, reason) in &reduced.dropped {
        report.push_str(&format!("DROPPED {id} {reason}\n"));
    }

    let mut facilities = Vec::new();
    let mut observations = Vec::new();
    let mut n_outliers = 0;
    for series in &reduced.series {
        let (lon, lat) = series.location;
        if !stack.contains(lon, lat) {
            report.push_str(&format!(
                "DROPPED {} outside covariate grid bounding box\n",
                series.facility_id
            ));
            continue;
        }
        let idx = facilities.len();
        facilities.push(PreparedFacility {
            facility_id: series.facility_id.clone(),
            location: series.location,
            zero_case: series.zero_case,
        });
        let curve = apply_offset_and_rescale(&series.proportions);
        let obs: Vec<Observation> = (1..=12)
            .map(|month| Observation {
                month,
                loc: idx,
                y: curve.get(month).ln(),
            })
            .collect();
        let (kept, removed) = filter_outliers(obs, config.log_outlier);
        if removed > 0 {
            n_outliers += removed;
            report.push_str(&format!(
                "OUTLIER {} removed {removed} observation(s) at or below log {}\n",
                facilities[idx].facility_id, config.log_outlier
            ));
        }
        for o in kept {
            observations.push((idx, o.month, o.y));
        }
    }

    let dropped_lines = report.lines().filter(|l| l.starts_with("DROPPED")).count();
    let prepared = PreparedData { facilities, observations };
    prepared.write(&config.outdir)?;
    write_text(&config.outdir.join(PREP_REPORT), &report)?;
    Ok(PrepSummary {
        n_facilities: prepared.facilities.len(),
        n_dropped: dropped_lines,
        n_outliers,
    })
}

fn load_stack(config: &PipelineConfig) -> Result<CovariateStack> {
    let mut stack = CovariateStack::load(&config.covariates)?;
    stack.set_lags_all(&config.lags());
    Ok(stack)
}

// ---------------------------------------------------------------------------
// select

/// Minimal facility series used only for the split helpers.
fn as_series(f: &PreparedFacility) -> FacilitySeries {
    FacilitySeries {
        facility_id: f.facility_id.clone(),
        location: f.location,
        median_counts: [0.0; 12],
        proportions: crate::curve::ProportionCurve::uniform(),
        zero_case: f.zero_case,
    }
}

/// Observations and covariate columns restricted to a facility subset; the
/// subset order defines the fit's location indices.
fn subset_problem_inputs(
    prepared: &PreparedData,
    stack: &CovariateStack,
    column_names: &[String],
    subset: &[FacilitySeries],
) -> Result<(Vec<Observation>, Vec<(f64, f64)>, Vec<(String, Vec<f64>)>)> {
    let locations: Vec<(f64, f64)> = subset.iter().map(|f| f.location).collect();
    let index_of = |id: &str| subset.iter().position(|f| f.facility_id == id);
    let mut observations = Vec::new();
    for &(idx, month, y) in &prepared.observations {
        if let Some(loc) = index_of(&prepared.facilities[idx].facility_id) {
            observations.push(Observation { month, loc, y });
        }
    }
    let mut columns = Vec::with_capacity(column_names.len());
    for name in column_names {
        let mut values = Vec::with_capacity(observations.len());
        for o in &observations {
            let (lon, lat) = locations[o.loc];
            values.push(stack.value_at(name, o.month, lon, lat)?);
        }
        columns.push((name.clone(), values));
    }
    Ok((observations, locations, columns))
}

/// Covariate selection: a 30% facility hold-out, VIF pruning, then
/// backwards DIC selection on two spatially interleaved training halves
/// (or one pass over the full training set with `single_pass`), and a
/// lower-DIC refit choosing between the two candidates.
pub fn cmd_select(config: &PipelineConfig) -> Result<SelectionReport> {
    let prepared = PreparedData::load(&config.outdir)?;
    let stack = load_stack(config)?;
    let column_names = stack.column_names();

    let all_series: Vec<FacilitySeries> = prepared.facilities.iter().map(as_series).collect();
    let (train, test) = split_train_test(&all_series, TEST_FRACTION, config.seed)?;

    let mut report = SelectionReport {
        seed: config.seed,
        train_ids: train.iter().map(|f| f.facility_id.clone()).collect(),
        test_ids: test.iter().map(|f| f.facility_id.clone()).collect(),
        ..SelectionReport::default()
    };

    // VIF pruning on the full training design.
    let (_, _, train_columns) = subset_problem_inputs(&prepared, &stack, &column_names, &train)?;
    let (candidates, vif_trace) = if column_names.len() >= 2 {
        vif_prune(&train_columns, config.vif_threshold)?
    } else {
        (column_names.clone(), Vec::new())
    };
    report.vif_trace = vif_trace;

    let run_pass = |subset: &[FacilitySeries],
                    report_log: &mut Vec<String>|
     -> Result<(Vec<String>, Vec<(Vec<String>, f64)>)> {
        let (observations, locations, columns) =
            subset_problem_inputs(&prepared, &stack, &candidates, subset)?;
        let problem = SelectionProblem {
            observations: &observations,
            locations: &locations,
            columns: &columns,
            start: default_start(),
            settings: config.fit_settings(),
        };
        let result = backwards_select(&problem, &candidates)?;
        report_log.extend(result.log);
        Ok((result.final_covariates, result.dic_trace))
    };

    let finalists: Vec<Vec<String>> = if config.single_pass {
        let (finals, trace) = run_pass(&train, &mut report.log)?;
        report.dic_trace = trace;
        vec![finals]
    } else {
        let (half_a, half_b) = split_training_halves(&train, config.seed);
        let mut finalists = Vec::new();
        for (label, half) in [("half A", &half_a), ("half B", &half_b)] {
            match run_pass(half, &mut report.log) {
                Ok((finals, trace)) => {
                    report.dic_trace.extend(trace);
                    finalists.push(finals);
                }
                Err(e) => report.log.push(format!("{label} selection failed: {e}")),
            }
        }
        if finalists.is_empty() {
            return Err(Error::Numerical(
                "selection failed on both training halves".into(),
            ));
        }
        finalists
    };

    // Refit on the full training data and keep the lower DIC. The two
    // candidates are compared at one set of hyperparameters, estimated on
    // the union of their covariates, so the deviances share a scale.
    let mut distinct: Vec<Vec<String>> = Vec::new();
    for f in finalists {
        if !distinct.contains(&f) {
            distinct.push(f);
        }
    }
    let (observations, locations, columns) =
        subset_problem_inputs(&prepared, &stack, &candidates, &train)?;
    let problem = SelectionProblem {
        observations: &observations,
        locations: &locations,
        columns: &columns,
        start: default_start(),
        settings: config.fit_settings(),
    };
    let mut union: Vec<String> = distinct.iter().flatten().cloned().collect();
    union.sort();
    union.dedup();
    let union_model = problem
        .fit_for(&union)
        .map_err(|e| Error::Numerical(format!("full-training refit failed: {e}")))?;
    let mut best: Option<(Vec<String>, f64)> = None;
    for candidate in distinct {
        match problem.dic_at(&candidate, &union_model.hyper) {
            Ok(dic) => {
                report.dic_trace.push((candidate.clone(), dic));
                if best.as_ref().is_none_or(|(_, bd)| dic < *bd) {
                    best = Some((candidate, dic));
                }
            }
            Err(e) => report
                .log
                .push(format!("full-training refit of {candidate:?} failed: {e}")),
        }
    }
    let (final_covariates, _) = best.ok_or_else(|| {
        Error::Numerical("all candidate refits failed on the full training set".into())
    })?;
    report.final_covariates = final_covariates;

    write_text(&config.outdir.join(SELECTION_REPORT), &report.to_text())?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// fit

/// Fits the selected model on all prepared facilities and writes the model
/// archive. `covariates` overrides the selection report's final set.
pub fn cmd_fit(config: &PipelineConfig, covariates: Option<&[String]>) -> Result<PathBuf> {
    let prepared = PreparedData::load(&config.outdir)?;
    let stack = load_stack(config)?;
    let selected: Vec<String> = match covariates {
        Some(names) => names.to_vec(),
        None => {
            let report =
                SelectionReport::from_text(&read_text(&config.outdir.join(SELECTION_REPORT))?)?;
            report.final_covariates
        }
    };

    let locations: Vec<(f64, f64)> = prepared.facilities.iter().map(|f| f.location).collect();
    let mut observations = Vec::with_capacity(prepared.observations.len());
    let mut design = Array2::zeros((prepared.observations.len(), selected.len() + 1));
    for (r, &(idx, month, y)) in prepared.observations.iter().enumerate() {
        observations.push(Observation { month, loc: idx, y });
        design[[r, 0]] = 1.0;
        let (lon, lat) = locations[idx];
        for (c, name) in selected.iter().enumerate() {
            design[[r, c + 1]] = stack.value_at(name, month, lon, lat)?;
        }
    }

    let mut model = fit(
        &observations,
        &design,
        &locations,
        &default_start(),
        &config.fit_settings(),
    )?;
    model.covariates = selected;
    model.standardization = stack.stats().to_vec();

    let path = config.outdir.join(MODEL_ARCHIVE);
    let mut buffer = Vec::new();
    write_model(&model, &mut buffer)
        .map_err(|e| Error::Validation(format!("archive serialization failed: {e}")))?;
    write_text(
        &path,
        std::str::from_utf8(&buffer)
            .map_err(|_| Error::Validation("archive is not UTF-8".into()))?,
    )?;
    Ok(path)
}

fn load_model(config: &PipelineConfig) -> Result<FittedModel> {
    let text = read_text(&config.outdir.join(MODEL_ARCHIVE))?;
    read_model(text.as_bytes())
}

// ---------------------------------------------------------------------------
// features

/// Outcome of `cmd_features`.
#[derive(Debug, Clone)]
pub struct FeatureSummary {
    pub n_targets: usize,
    pub skipped: Vec<String>,
    pub features_path: PathBuf,
    pub mpi_path: PathBuf,
}

fn load_targets(config: &PipelineConfig, model: &FittedModel) -> Result<Vec<(f64, f64)>> {
    match &config.targets {
        None => Ok(model.locations.clone()),
        Some(path) => {
            let text = read_text(path)?;
            let mut targets = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if i == 0 {
                    if line.trim() != "lon,lat" {
                        return Err(Error::Parse {
                            path: path.display().to_string(),
                            line: 1,
                            message: format!("expected header lon,lat, got {line:?}"),
                        });
                    }
                    continue;
                }
                let bad = || Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: format!("malformed row {line:?}"),
                };
                let (lon, lat) = line.split_once(',').ok_or_else(bad)?;
                targets.push((
                    lon.trim().parse().map_err(|_| bad())?,
                    lat.trim().parse().map_err(|_| bad())?,
                ));
            }
            Ok(targets)
        }
    }
}

fn load_api_grid(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = read_text(path)?;
    let mut grid = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "lon,lat,api" {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    message: format!("expected header lon,lat,api, got {line:?}"),
                });
            }
            continue;
        }
        let bad = || Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: format!("malformed row {line:?}"),
        };
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        grid.push((
            parts[0].trim().parse().map_err(|_| bad())?,
            parts[1].trim().parse().map_err(|_| bad())?,
            parts[2].trim().parse().map_err(|_| bad())?,
        ));
    }
    if grid.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no api rows",
            path.display()
        )));
    }
    Ok(grid)
}

fn nearest_api(grid: &[(f64, f64, f64)], lon: f64, lat: f64) -> f64 {
    grid.iter()
        .min_by(|a, b| {
            let da = (a.0 - lon).powi(2) + (a.1 - lat).powi(2);
            let db = (b.0 - lon).powi(2) + (b.1 - lat).powi(2);
            da.total_cmp(&db)
        })
        .map(|&(_, _, api)| api)
        .expect("non-empty api grid")
}

/// Per-target posterior samples of curves, (target-major, then draw).
fn predict_samples(
    model: &FittedModel,
    targets: &[(f64, f64)],
    design_at_targets: &Array2<f64>,
    samples: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<Vec<crate::curve::ProportionCurve>>> {
    let predictor = KrigingPredictor::new(model, targets)?;
    let draws = sample_posterior(model, samples, seed);
    let workers = threads.min(draws.len()).max(1);

    // Parallel over draws; results keyed by draw index so the worker count
    // never changes the output.
    let chunk = draws.len().div_ceil(workers);
    let mut per_draw: Vec<Option<Vec<crate::curve::ProportionCurve>>> = vec![None; draws.len()];
    let results: Vec<Result<Vec<(usize, Vec<crate::curve::ProportionCurve>)>>> =
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..workers {
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(draws.len());
                let draws = &draws;
                let predictor = &predictor;
                handles.push(scope.spawn(move || {
                    let mut out = Vec::with_capacity(hi - lo);
                    for k in lo..hi {
                        out.push((k, predictor.predict(&draws[k], design_at_targets)?));
                    }
                    Ok(out)
                }));
            }
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
    for result in results {
        for (k, curves) in result? {
            per_draw[k] = Some(curves);
        }
    }

    let mut per_target = vec![Vec::with_capacity(samples); targets.len()];
    for curves in per_draw.into_iter().map(|c| c.expect("draw computed")) {
        for (t, curve) in curves.into_iter().enumerate() {
            per_target[t].push(curve);
        }
    }
    Ok(per_target)
}

/// Draws posterior samples, derives per-sample seasonality features at each
/// target, summarizes uncertainty, joins the API grid for the index and
/// MPI, and writes the features and MPI CSVs.
pub fn cmd_features(config: &PipelineConfig) -> Result<FeatureSummary> {
    let model = load_model(config)?;
    let stack = load_stack(config)?;
    let api_grid = load_api_grid(&config.api_grid)?;
    let api_max = api_grid.iter().map(|g| g.2).fold(0.0f64, f64::max);

    let mut skipped = Vec::new();
    let targets: Vec<(f64, f64)> = load_targets(config, &model)?
        .into_iter()
        .filter(|&(lon, lat)| {
            if stack.contains(lon, lat) {
                true
            } else {
                skipped.push(format!(
                    "SKIPPED ({lon}, {lat}) outside covariate grid bounding box"
                ));
                false
            }
        })
        .collect();
    if targets.is_empty() {
        return Err(Error::Validation("no targets inside the covariate domain".into()));
    }

    let design_at_targets = build_design(&stack, &targets, &model.covariates)?;
    let per_target = predict_samples(
        &model,
        &targets,
        &design_at_targets,
        config.samples,
        config.seed,
        config.effective_threads(),
    )?;

    // Per-sample features and index draws at every target. Targets are
    // independent, so they fan out over the worker pool; results are keyed
    // by target index to keep the output order fixed.
    let apis: Vec<f64> = targets
        .iter()
        .map(|&(lon, lat)| nearest_api(&api_grid, lon, lat))
        .collect();
    let summarize_target = |t: usize| -> UncertaintySummary {
        let features: Vec<SeasonFeatures> = per_target[t]
            .iter()
            .map(|curve| derive_features(curve, config.error_threshold))
            .collect();
        let index_samples: Vec<f64> = features
            .iter()
            .map(|f| {
                if api_max > 0.0 {
                    f.entropy * apis[t] / api_max
                } else {
                    0.0
                }
            })
            .collect();
        summarize_samples(&features, &index_samples)
    };
    let workers = config.effective_threads().min(targets.len()).max(1);
    let chunk = targets.len().div_ceil(workers);
    let mut summaries: Vec<Option<UncertaintySummary>> = vec![None; targets.len()];
    let computed: Vec<Vec<(usize, UncertaintySummary)>> = std::thread::scope(|scope| {
        let summarize_target = &summarize_target;
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(targets.len());
                scope.spawn(move || (lo..hi).map(|t| (t, summarize_target(t))).collect())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for batch in computed {
        for (t, summary) in batch {
            summaries[t] = Some(summary);
        }
    }
    let summaries: Vec<UncertaintySummary> =
        summaries.into_iter().map(|s| s.expect("target summarized")).collect();

    let categories = assign_categories(
        &summaries
            .iter()
            .map(|s| (s.modality, s.index_median))
            .collect::<Vec<_>>(),
    );

    let mut features_csv = String::from(
        "lon,lat,entropy,index,category,modality,modality_prob,season_rank,start_month,\
         start_dev_months,end_month,end_dev_months,peak_month,peak_dev_months,length_months,major\n",
    );
    for (t, &(lon, lat)) in targets.iter().enumerate() {
        let s = &summaries[t];
        let modality = s.modality.map_or(String::new(), |m| m.to_string());
        let head = format!(
            "{lon},{lat},{},{},{},{modality},{}",
            s.entropy_median, s.index_median, categories[t], s.modality_probability
        );
        if s.seasons.is_empty() {
            features_csv.push_str(&format!("{head},,,,,,,,,\n"));
        } else {
            for season in &s.seasons {
                features_csv.push_str(&format!(
                    "{head},{},{},{},{},{},{},{},{},{}\n",
                    season.rank,
                    season.start_month,
                    season.start_dev_months,
                    season.end_month,
                    season.end_dev_months,
                    season.peak_month,
                    season.peak_dev_months,
                    season.length_months,
                    season.major
                ));
            }
        }
    }

    let mut mpi_csv = String::from("lon,lat,month,mpi_median,mpi_lo95,mpi_hi95\n");
    for (t, &(lon, lat)) in targets.iter().enumerate() {
        for month in 1..=12usize {
            let mut values: Vec<f64> = per_target[t]
                .iter()
                .map(|curve| curve.get(month) * apis[t])
                .collect();
            values.sort_by(f64::total_cmp);
            mpi_csv.push_str(&format!(
                "{lon},{lat},{month},{},{},{}\n",
                quantile(&values, 0.5),
                quantile(&values, 0.025),
                quantile(&values, 0.975)
            ));
        }
    }

    let features_path = config.outdir.join(FEATURES_CSV);
    let mpi_path = config.outdir.join(MPI_CSV);
    write_text(&features_path, &features_csv)?;
    write_text(&mpi_path, &mpi_csv)?;
    write_text(&config.outdir.join(FEATURES_LOG), &(skipped.join("\n") + "\n"))?;
    Ok(FeatureSummary {
        n_targets: targets.len(),
        skipped,
        features_path,
        mpi_path,
    })
}

// ---------------------------------------------------------------------------
// render

/// Renders SVGs from a features or MPI CSV into the output directory.
/// A CSV with `month` and `mpi_median` columns yields one curve plot per
/// location; otherwise each requested column (default: every column except
/// lon/lat) becomes one scatter map.
pub fn cmd_render(
    config: &PipelineConfig,
    input: &Path,
    columns: &[String],
) -> Result<Vec<PathBuf>> {
    let text = read_text(input)?;
    let header: Vec<&str> = text
        .lines()
        .next()
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .collect();
    let style = RenderStyle::default();
    let mut written = Vec::new();

    if header.contains(&"month") && header.contains(&"mpi_median") {
        for (key, svg) in render_curve_plots(&text, "mpi", &style)? {
            let path = config.outdir.join(format!("curve_{key}.svg"));
            write_text(&path, &svg)?;
            written.push(path);
        }
    } else {
        let selected: Vec<String> = if columns.is_empty() {
            header
                .iter()
                .filter(|&&h| h != "lon" && h != "lat")
                .map(|h| h.to_string())
                .collect()
        } else {
            columns.to_vec()
        };
        for column in &selected {
            let svg = render_feature_map(&text, column, &style)?;
            let path = config.outdir.join(format!("map_{column}.svg"));
            write_text(&path, &svg)?;
            written.push(path);
        }
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// synth

/// Generates a synthetic dataset and writes the facility, covariate, and
/// API CSVs plus the truth record into the output directory.
pub fn cmd_synth(config: &PipelineConfig, spec: &SynthSpec) -> Result<Vec<PathBuf>> {
    let out = generate(spec)?;
    let paths = [
        (config.outdir.join("facilities.csv"), out.facilities_csv),
        (config.outdir.join("covariates.csv"), out.covariates_csv),
        (config.outdir.join("api.csv"), out.api_csv),
        (config.outdir.join("truth.json"), out.truth.to_text()),
    ];
    let mut written = Vec::new();
    for (path, contents) in paths {
        write_text(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}
