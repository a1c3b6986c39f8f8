//! Synthetic-data oracle: facility datasets generated from known model
//! parameters, so every downstream estimate can be checked against its
//! ground truth.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::stmodel::{build_joint_covariance, chol_lower, node_index, Hyperparameters};

/// A smooth spatial-seasonal covariate surface and its true coefficient on
/// the standardized scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateGen {
    pub name: String,
    /// Coefficient applied to the standardized covariate in the log
    /// proportion.
    pub beta: f64,
    /// Month (may be fractional) where the seasonal cosine peaks.
    pub peak_month: f64,
    pub amplitude: f64,
    /// Relative weight of the smooth spatial modulation term.
    pub spatial_weight: f64,
}

/// Generation settings. Variances may be exactly zero to switch signal
/// sources off, unlike fitted [`Hyperparameters`].
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_locations: usize,
    /// (lon_min, lon_max, lat_min, lat_max).
    pub bbox: (f64, f64, f64, f64),
    /// Covariate lattice resolution per axis; facilities sit on lattice
    /// cells so grid lookups are exact.
    pub grid_size: usize,
    pub sigma_e2: f64,
    pub sigma_f2: f64,
    pub kappa: f64,
    pub a: f64,
    pub stationary_ar1: bool,
    pub covariates: Vec<CovariateGen>,
    /// Mean annual case total per facility (log-normal across facilities).
    pub annual_scale: f64,
    pub years: usize,
    /// Probability that a monthly report is missing (empty cases cell).
    pub gap_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_locations: 30,
            bbox: (44.0, 50.0, -24.0, -14.0),
            grid_size: 12,
            sigma_e2: 0.326,
            sigma_f2: 0.245,
            kappa: 3.163,
            a: 0.756,
            stationary_ar1: false,
            covariates: vec![CovariateGen {
                name: "rain".into(),
                beta: 0.8,
                peak_month: 2.0,
                amplitude: 1.0,
                spatial_weight: 0.4,
            }],
            annual_scale: 600.0,
            years: 3,
            gap_fraction: 0.0,
            seed: 0,
        }
    }
}

/// Everything latent behind a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthTruth {
    pub seed: u64,
    pub sigma_e2: f64,
    pub sigma_f2: f64,
    pub kappa: f64,
    pub a: f64,
    pub stationary_ar1: bool,
    /// (name, coefficient on the standardized scale).
    pub beta: Vec<(String, f64)>,
    pub facility_ids: Vec<String>,
    pub locations: Vec<(f64, f64)>,
    /// Latent field, month-major over (month, facility).
    pub phi: Vec<f64>,
    /// True proportion curves, one 12-vector per facility.
    pub proportions: Vec<[f64; 12]>,
    /// Mean annual case total per facility.
    pub api: Vec<f64>,
}

impl SynthTruth {
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("malformed truth record: {e}")))
    }
}

/// A generated dataset: file contents plus the truth record.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub facilities_csv: String,
    pub covariates_csv: String,
    pub api_csv: String,
    pub truth: SynthTruth,
}

fn validate(spec: &SynthSpec) -> Result<()> {
    if spec.n_locations < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 locations, got {}",
            spec.n_locations
        )));
    }
    if spec.years < 1 {
        return Err(Error::Validation("need at least 1 year".into()));
    }
    if spec.grid_size * spec.grid_size < spec.n_locations {
        return Err(Error::Validation(format!(
            "{} lattice cells cannot host {} facilities",
            spec.grid_size * spec.grid_size,
            spec.n_locations
        )));
    }
    let ok = spec.sigma_e2 >= 0.0
        && spec.sigma_f2 >= 0.0
        && spec.kappa > 0.0
        && spec.a.abs() < 1.0
        && (0.0..1.0).contains(&spec.gap_fraction)
        && spec.annual_scale > 0.0;
    if !ok {
        return Err(Error::Validation(
            "variances must be nonnegative, kappa positive, |a| < 1, \
             gap_fraction in [0, 1), annual_scale positive"
            .into(),
        ));
    }
    Ok(())
}

/// Raw covariate surface value. The spatial pattern is phase-shifted by the
/// generator's peak month and multiplies the seasonal term, so distinct
/// generators produce linearly independent columns rather than sharing the
/// two-dimensional annual-harmonic span.
fn covariate_value(gen: &CovariateGen, month: usize, lon: f64, lat: f64, bbox: (f64, f64, f64, f64)) -> f64 {
    let (lon_min, lon_max, lat_min, lat_max) = bbox;
    let u = (lon - lon_min) / (lon_max - lon_min).max(1e-12);
    let v = (lat - lat_min) / (lat_max - lat_min).max(1e-12);
    let phase = gen.peak_month / 12.0;
    let seasonal = (TAU * (month as f64 - gen.peak_month) / 12.0).cos();
    let modulation = (TAU * (u + phase)).sin() * (TAU * v).cos();
    let background = (TAU * u).cos() * (TAU * (v + phase)).sin();
    gen.amplitude
        * (seasonal * (1.0 + gen.spatial_weight * modulation)
            + gen.spatial_weight * background)
}

fn format_coord(x: f64) -> String {
    // Shortest round-trip repr keeps the files byte-deterministic.
    format!("{x}")
}

/// Generates a dataset from the spec: uniform facility locations on the
/// lattice, covariates from the smooth surfaces, the latent field from the
/// joint covariance, log proportions by Eq.-style composition, and monthly
/// counts by multinomial splits of log-normal annual totals.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lon_min, lon_max, lat_min, lat_max) = spec.bbox;
    let g = spec.grid_size;

    // Lattice cells, row-major.
    let mut cells = Vec::with_capacity(g * g);
    for iy in 0..g {
        for ix in 0..g {
            let lon = lon_min + (lon_max - lon_min) * (ix as f64 + 0.5) / g as f64;
            let lat = lat_min + (lat_max - lat_min) * (iy as f64 + 0.5) / g as f64;
            cells.push((lon, lat));
        }
    }

    // Facilities on distinct lattice cells.
    let mut cell_indices: Vec<usize> = (0..cells.len()).collect();
    cell_indices.shuffle(&mut rng);
    let mut chosen: Vec<usize> = cell_indices[..spec.n_locations].to_vec();
    chosen.sort_unstable();
    let locations: Vec<(f64, f64)> = chosen.iter().map(|&i| cells[i]).collect();
    let facility_ids: Vec<String> = (1..=spec.n_locations)
        .map(|i| format!("HF{i:04}"))
        .collect();

    // Standardization statistics over the full lattice, as ingest computes.
    let mut stats = Vec::with_capacity(spec.covariates.len());
    for gen in &spec.covariates {
        let all: Vec<f64> = (1..=12)
            .flat_map(|m| {
                cells
                    .iter()
                    .map(move |&(lon, lat)| covariate_value(gen, m, lon, lat, spec.bbox))
            })
            .collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (all.len() as f64 - 1.0);
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        stats.push((mean, sd));
    }

    // Latent field over (month, facility) nodes.
    let n = spec.n_locations;
    let phi: Vec<f64> = if spec.sigma_f2 > 0.0 {
        let hyper = Hyperparameters {
            sigma_e2: 1.0, // unused by the field covariance
            sigma_f2: spec.sigma_f2,
            kappa: spec.kappa,
            a: spec.a,
        };
        let cov = build_joint_covariance(&locations, &hyper, spec.stationary_ar1)?;
        let l = chol_lower(&cov, "synthetic field covariance")?;
        let eta: Vec<f64> = (0..12 * n).map(|_| rng.sample(StandardNormal)).collect();
        (0..12 * n)
            .map(|i| (0..=i).map(|j| l[[i, j]] * eta[j]).sum())
            .collect()
    } else {
        // Keep the RNG stream aligned so sigma_f2 = 0 only changes the field.
        for _ in 0..12 * n {
            let _: f64 = rng.sample(StandardNormal);
        }
        vec![0.0; 12 * n]
    };

    // True proportions: softmax over months of x beta + phi + eps.
    let noise_sd = spec.sigma_e2.sqrt();
    let mut proportions = Vec::with_capacity(n);
    for (j, &(lon, lat)) in locations.iter().enumerate() {
        let mut logv = [0.0f64; 12];
        for (month, lv) in logv.iter_mut().enumerate() {
            let m = month + 1;
            let mut x = 0.0;
            for (gen, &(mean, sd)) in spec.covariates.iter().zip(&stats) {
                x += gen.beta * (covariate_value(gen, m, lon, lat, spec.bbox) - mean) / sd;
            }
            let eps: f64 = rng.sample::<f64, _>(StandardNormal) * noise_sd;
            *lv = x + phi[node_index(m, j, n)] + eps;
        }
        let max = logv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p = [0.0f64; 12];
        let mut total = 0.0;
        for (pi, lv) in p.iter_mut().zip(&logv) {
            *pi = (lv - max).exp();
            total += *pi;
        }
        for pi in &mut p {
            *pi /= total;
        }
        proportions.push(p);
    }

    // Annual totals (log-normal around the scale) and multinomial months.
    let mut facilities_csv = String::from("facility_id,lon,lat,year,month,cases\n");
    let mut api = Vec::with_capacity(n);
    for (j, &(lon, lat)) in locations.iter().enumerate() {
        let mut annual_sum = 0.0;
        for year in 0..spec.years {
            let z: f64 = rng.sample(StandardNormal);
            let total = (spec.annual_scale * (0.5 * z - 0.125).exp()).round().max(0.0) as u64;
            annual_sum += total as f64;
            let counts = multinomial(&mut rng, total, &proportions[j]);
            for (month, &c) in counts.iter().enumerate() {
                let gap = spec.gap_fraction > 0.0 && rng.gen::<f64>() < spec.gap_fraction;
                let cases = if gap { String::new() } else { c.to_string() };
                facilities_csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    facility_ids[j],
                    format_coord(lon),
                    format_coord(lat),
                    2014 + year,
                    month + 1,
                    cases
                ));
            }
        }
        api.push(annual_sum / spec.years as f64);
    }

    let mut covariates_csv = String::from("covariate,month,lon,lat,value\n");
    for gen in &spec.covariates {
        for m in 1..=12 {
            for &(lon, lat) in &cells {
                covariates_csv.push_str(&format!(
                    "{},{m},{},{},{}\n",
                    gen.name,
                    format_coord(lon),
                    format_coord(lat),
                    covariate_value(gen, m, lon, lat, spec.bbox)
                ));
            }
        }
    }

    let mut api_csv = String::from("lon,lat,api\n");
    for (j, &(lon, lat)) in locations.iter().enumerate() {
        api_csv.push_str(&format!(
            "{},{},{}\n",
            format_coord(lon),
            format_coord(lat),
            api[j]
        ));
    }

    let truth = SynthTruth {
        seed: spec.seed,
        sigma_e2: spec.sigma_e2,
        sigma_f2: spec.sigma_f2,
        kappa: spec.kappa,
        a: spec.a,
        stationary_ar1: spec.stationary_ar1,
        beta: spec
            .covariates
            .iter()
            .map(|g| (g.name.clone(), g.beta))
            .collect(),
        facility_ids,
        locations,
        phi,
        proportions,
        api,
    };

    Ok(SynthOutput {
        facilities_csv,
        covariates_csv,
        api_csv,
        truth,
    })
}

/// Multinomial draw by conditional binomials.
fn multinomial(rng: &mut ChaCha8Rng, total: u64, p: &[f64; 12]) -> [u64; 12] {
    let mut counts = [0u64; 12];
    let mut remaining = total;
    let mut mass_left = 1.0f64;
    for m in 0..11 {
        if remaining == 0 {
            break;
        }
        let q = (p[m] / mass_left).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, q).expect("valid binomial").sample(rng);
        counts[m] = draw;
        remaining -= draw;
        mass_left = (mass_left - p[m]).max(0.0);
    }
    counts[11] = remaining;
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_facilities_from, reduce_to_series, CovariateStack};

    fn quiet_spec() -> SynthSpec {
        SynthSpec {
            n_locations: 10,
            years: 2,
            annual_scale: 400.0,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn no_signal_gives_uniform_truth_curves() {
        let spec = SynthSpec {
            sigma_e2: 0.0,
            sigma_f2: 0.0,
            a: 0.0,
            covariates: vec![CovariateGen {
                name: "rain".into(),
                beta: 0.0,
                peak_month: 2.0,
                amplitude: 1.0,
                spatial_weight: 0.4,
            }],
            ..quiet_spec()
        };
        let out = generate(&spec).unwrap();
        for p in &out.truth.proportions {
            for v in p {
                assert!((v - 1.0 / 12.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truth_proportions_sum_to_one() {
        let out = generate(&quiet_spec()).unwrap();
        for p in &out.truth.proportions {
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let a = generate(&quiet_spec()).unwrap();
        let b = generate(&quiet_spec()).unwrap();
        assert_eq!(a.facilities_csv, b.facilities_csv);
        assert_eq!(a.covariates_csv, b.covariates_csv);
        assert_eq!(a.api_csv, b.api_csv);
        assert_eq!(a.truth.to_text(), b.truth.to_text());
        let c = generate(&SynthSpec { seed: 1, ..quiet_spec() }).unwrap();
        assert_ne!(a.facilities_csv, c.facilities_csv);
    }

    #[test]
    fn covariate_peak_propagates_to_curves() {
        // Strong positive coefficient on a covariate peaking in month 3:
        // the mean generated curve should peak near month 3.
        let mut hits = 0;
        for seed in 0..20u64 {
            let spec = SynthSpec {
                seed,
                sigma_e2: 0.05,
                sigma_f2: 0.05,
                covariates: vec![CovariateGen {
                    name: "rain".into(),
                    beta: 2.0,
                    peak_month: 3.0,
                    amplitude: 1.0,
                    spatial_weight: 0.2,
                }],
                ..quiet_spec()
            };
            let out = generate(&spec).unwrap();
            let mut mean = [0.0f64; 12];
            for p in &out.truth.proportions {
                for (acc, v) in mean.iter_mut().zip(p) {
                    *acc += v;
                }
            }
            let peak = mean
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
                + 1;
            let dist = (peak as i64 - 3).rem_euclid(12).min((3 - peak as i64).rem_euclid(12));
            if dist <= 1 {
                hits += 1;
            }
        }
        assert!(hits >= 18, "peak near month 3 in only {hits}/20 replicates");
    }

    #[test]
    fn field_variance_matches_sigma_f2_when_independent() {
        // a = 0 and a short spatial range make month-1 field values nearly
        // iid N(0, sigma_f2): the sample variance over locations must sit
        // within 3 standard errors.
        let spec = SynthSpec {
            n_locations: 100,
            grid_size: 16,
            a: 0.0,
            sigma_f2: 0.5,
            kappa: 50.0,
            seed: 33,
            ..quiet_spec()
        };
        let out = generate(&spec).unwrap();
        let month1 = &out.truth.phi[..100];
        let mean = month1.iter().sum::<f64>() / 100.0;
        let var = month1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0;
        let se = 0.5 * (2.0f64 / 99.0).sqrt();
        assert!(
            (var - 0.5).abs() < 3.0 * se,
            "sample variance {var} vs sigma_f2 0.5 (se {se})"
        );
    }

    #[test]
    fn outputs_parse_through_ingest() {
        let out = generate(&quiet_spec()).unwrap();
        let records = load_facilities_from(out.facilities_csv.as_bytes(), "synth").unwrap();
        assert_eq!(records.len(), 10 * 2 * 12);
        let reduced = reduce_to_series(&records);
        assert_eq!(reduced.series.len(), 10);
        assert!(reduced.dropped.is_empty());
        let stack = CovariateStack::load_from(out.covariates_csv.as_bytes(), "synth").unwrap();
        assert_eq!(stack.names(), &["rain".to_string()]);
        // Facility locations are lattice cells, so lookups are exact.
        for &(lon, lat) in &out.truth.locations {
            assert!(stack.contains(lon, lat));
        }
        let truth_text = out.truth.to_text();
        let back = SynthTruth::from_text(&truth_text).unwrap();
        assert_eq!(back.locations, out.truth.locations);
    }

    #[test]
    fn gap_fraction_leaves_empty_cells() {
        let spec = SynthSpec { gap_fraction: 0.3, seed: 5, ..quiet_spec() };
        let out = generate(&spec).unwrap();
        let records = load_facilities_from(out.facilities_csv.as_bytes(), "synth").unwrap();
        let missing = records.iter().filter(|r| r.cases.is_none()).count();
        assert!(missing > 0);
    }

    #[test]
    fn multinomial_conserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = [0.3, 0.1, 0.05, 0.05, 0.1, 0.05, 0.05, 0.1, 0.05, 0.05, 0.05, 0.05];
        for total in [0u64, 1, 13, 997] {
            let c = multinomial(&mut rng, total, &p);
            assert_eq!(c.iter().sum::<u64>(), total);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&SynthSpec { n_locations: 1, ..quiet_spec() }).is_err());
        assert!(generate(&SynthSpec { years: 0, ..quiet_spec() }).is_err());
        assert!(generate(&SynthSpec { grid_size: 2, ..quiet_spec() }).is_err());
        assert!(generate(&SynthSpec { sigma_e2: -0.1, ..quiet_spec() }).is_err());
    }
}
