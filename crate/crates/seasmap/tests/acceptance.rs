//! Acceptance suite: one pass/fail line per criterion, independent oracles
//! throughout. Runs without the libtest harness so every line prints during
//! `cargo test`; the process exits nonzero if any criterion fails.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use ndarray_linalg::Inverse;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use seasmap::curve::ProportionCurve;
use seasmap::ingest::{
    apply_offset_and_rescale, filter_outliers, load_facilities_from, reduce_to_series,
    CovariateStack,
};
use seasmap::numerics::{
    circular_deviation, circular_median, month_angle, Angle, MONTHS_PER_RADIAN,
};
use seasmap::pipeline::{
    cmd_features, cmd_fit, cmd_prep, cmd_render, cmd_select, cmd_synth, PipelineConfig,
};
use seasmap::seasonal::{derive_features, fit_rvm, kl_entropy, rvm_density};
use seasmap::selection::vif_prune;
use seasmap::stmodel::{
    build_joint_covariance, chol_lower, fit, haversine_km, latent_posterior, matern_cov,
    node_index, FitSettings, Hyperparameters, Observation,
};
use seasmap::synth::{generate, CovariateGen, SynthSpec, SynthTruth};

fn main() {
    let criteria: Vec<(&str, fn() -> Result<String, String>)> = vec![
        ("exact-inference oracle equivalence", c1_exact_inference),
        ("Kronecker separability identity", c2_kronecker),
        ("hyperparameter recovery", c3_hyper_recovery),
        ("coefficient interval coverage", c4_coefficient_coverage),
        ("entropy exactness", c5_entropy),
        ("von Mises self-consistency", c6_von_mises),
        ("season membership rule", c7_season_membership),
        ("circular summaries", c8_circular_summaries),
        ("covariate selection sanity", c9_selection_sanity),
        ("end-to-end determinism", c10_determinism),
        ("desk-scale performance", c11_performance),
    ];

    // Optional numeric arguments select a subset of criteria.
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse::<usize>().ok())
        .collect();

    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !selected.is_empty() && !selected.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => {
                println!("criterion {:2} PASS  {name}: {detail} [{elapsed:.1}s]", i + 1)
            }
            Err(detail) => {
                failures += 1;
                println!("criterion {:2} FAIL  {name}: {detail} [{elapsed:.1}s]", i + 1)
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    if selected.is_empty() {
        println!("all {} acceptance criteria passed", criteria.len());
    }
}

fn random_locations(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| (44.0 + rng.gen::<f64>() * 6.0, -24.0 + rng.gen::<f64>() * 10.0))
        .collect()
}

// ---------------------------------------------------------------------------
// 1. latent_posterior against a dense normal-equations oracle.

fn c1_exact_inference() -> Result<String, String> {
    let start = Instant::now();
    let beta_prior_var = 25.0;
    let mut worst: f64 = 0.0;
    for instance in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + instance);
        let locations = random_locations(&mut rng, 3);
        let hyper = Hyperparameters::new(
            0.1 + rng.gen::<f64>() * 0.4,
            0.1 + rng.gen::<f64>() * 0.4,
            0.5 + rng.gen::<f64>() * 2.5,
            -0.8 + rng.gen::<f64>() * 1.6,
        )
        .unwrap();

        // All 36 nodes observed once, intercept plus 2 covariates.
        let n = locations.len();
        let n_obs = 12 * n;
        let m = 3;
        let mut observations = Vec::with_capacity(n_obs);
        let mut design = Array2::zeros((n_obs, m));
        for month in 1..=12usize {
            for loc in 0..n {
                let r = observations.len();
                design[[r, 0]] = 1.0;
                design[[r, 1]] = rng.sample::<f64, _>(StandardNormal);
                design[[r, 2]] = rng.sample::<f64, _>(StandardNormal);
                observations.push(Observation {
                    month,
                    loc,
                    y: -2.5 + rng.sample::<f64, _>(StandardNormal),
                });
            }
        }

        let posterior = latent_posterior(
            &observations,
            &design,
            &locations,
            &hyper,
            beta_prior_var,
            false,
        )
        .map_err(|e| format!("latent_posterior failed: {e}"))?;

        // Normal-equations oracle: Sigma = (P^-1 + H^T H / s_e2)^-1,
        // mean = Sigma H^T y / s_e2, with H = [X | node selector].
        let d = m + 12 * n;
        let prior = build_joint_covariance(&locations, &hyper, false).unwrap();
        let prior_inv = prior.inv().map_err(|e| format!("oracle inversion: {e}"))?;
        let mut p_inv = Array2::<f64>::zeros((d, d));
        for i in 0..m {
            p_inv[[i, i]] = 1.0 / beta_prior_var;
        }
        p_inv
            .slice_mut(ndarray::s![m.., m..])
            .assign(&prior_inv);

        let mut h = Array2::<f64>::zeros((n_obs, d));
        let mut y = Array1::<f64>::zeros(n_obs);
        for (r, o) in observations.iter().enumerate() {
            for c in 0..m {
                h[[r, c]] = design[[r, c]];
            }
            h[[r, m + node_index(o.month, o.loc, n)]] = 1.0;
            y[r] = o.y;
        }
        let q = &p_inv + &(h.t().dot(&h) / hyper.sigma_e2);
        let sigma = q.inv().map_err(|e| format!("oracle inversion: {e}"))?;
        let mean = sigma.dot(&h.t().dot(&y)) / hyper.sigma_e2;

        let cov = posterior.cov_factor.dot(&posterior.cov_factor.t());
        for i in 0..d {
            worst = worst.max((posterior.mean[i] - mean[i]).abs());
            for j in 0..d {
                worst = worst.max((cov[[i, j]] - sigma[[i, j]]).abs());
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if worst < 1e-8 && elapsed < 10.0 {
        Ok(format!("max |difference| {worst:.2e} over 5 instances"))
    } else {
        Err(format!("max |difference| {worst:.2e}, elapsed {elapsed:.1}s"))
    }
}

// ---------------------------------------------------------------------------
// 2. build_joint_covariance against the elementwise product A(i,i')M(j,j'),
//    with A from the explicit AR(1) propagation phi = T xi, A = T T^T.

fn c2_kronecker() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for instance in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + instance);
        let n = 2 + (rng.gen::<u64>() % 5) as usize;
        let locations = random_locations(&mut rng, n);
        let hyper = Hyperparameters::new(
            0.1 + rng.gen::<f64>() * 0.4,
            0.1 + rng.gen::<f64>() * 0.9,
            0.5 + rng.gen::<f64>() * 4.5,
            -0.9 + rng.gen::<f64>() * 1.8,
        )
        .unwrap();

        let mut t = Array2::<f64>::zeros((12, 12));
        for i in 0..12 {
            for j in 0..=i {
                t[[i, j]] = hyper.a.powi((i - j) as i32);
            }
        }
        let a_mat = t.dot(&t.t());

        let joint = build_joint_covariance(&locations, &hyper, false).unwrap();
        for mi in 1..=12usize {
            for mj in 1..=12usize {
                for li in 0..n {
                    for lj in 0..n {
                        let h = haversine_km(locations[li], locations[lj]);
                        let m = matern_cov(h, hyper.sigma_f2, hyper.kappa);
                        let expected = a_mat[[mi - 1, mj - 1]] * m;
                        let got =
                            joint[[node_index(mi, li, n), node_index(mj, lj, n)]];
                        worst = worst.max((expected - got).abs());
                    }
                }
            }
        }
    }
    if worst < 1e-12 {
        Ok(format!("max |difference| {worst:.2e} over 10 instances"))
    } else {
        Err(format!("max |difference| {worst:.2e}"))
    }
}

// ---------------------------------------------------------------------------
// 3. Hyperparameter recovery at the reference truth.

fn c3_hyper_recovery() -> Result<String, String> {
    let start = Instant::now();
    let truth = Hyperparameters::new(0.326, 0.245, 3.163, 0.756).unwrap();
    let true_ratio = truth.sigma_f2 / truth.sigma_e2;
    let settings = FitSettings { dic_draws: 10, ..FitSettings::default() };
    let fit_start = Hyperparameters::new(0.3, 0.3, 1.0, 0.3).unwrap();

    let mut a_ok = 0;
    let mut ratio_ok = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let locations = random_locations(&mut rng, 50);
        let n = locations.len();
        let cov = build_joint_covariance(&locations, &truth, false).unwrap();
        let l = chol_lower(&cov, "truth covariance").unwrap();
        let eta: Array1<f64> = (0..12 * n).map(|_| rng.sample(StandardNormal)).collect();
        let phi = l.dot(&eta);

        let mut observations = Vec::with_capacity(12 * n);
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
        let model = fit(&observations, &design, &locations, &fit_start, &settings)
            .map_err(|e| format!("fit failed at seed {seed}: {e}"))?;

        if (model.hyper.a - truth.a).abs() <= 0.15 {
            a_ok += 1;
        }
        let ratio = model.hyper.sigma_f2 / model.hyper.sigma_e2;
        if ratio >= true_ratio / 2.0 && ratio <= true_ratio * 2.0 {
            ratio_ok += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if a_ok >= 8 && ratio_ok >= 8 && elapsed < 600.0 {
        Ok(format!(
            "a within 0.15 in {a_ok}/10 seeds, variance ratio within 2x in {ratio_ok}/10"
        ))
    } else {
        Err(format!(
            "a ok in {a_ok}/10, ratio ok in {ratio_ok}/10, elapsed {elapsed:.1}s"
        ))
    }
}

// ---------------------------------------------------------------------------
// 4. Coefficient interval coverage on synthetic data with known beta.

fn c4_coefficient_coverage() -> Result<String, String> {
    let truths = [("rain", 1.0), ("temp", -0.7)];
    let mut covered = 0;
    let mut trials = 0;
    for seed in 0..20u64 {
        let spec = SynthSpec {
            n_locations: 25,
            sigma_e2: 0.1,
            sigma_f2: 0.15,
            kappa: 3.163,
            a: 0.6,
            // Purely seasonal covariates (no spatial modulation): the
            // per-facility proportion normalization is then orthogonal to
            // the covariate columns, so the generator coefficient is
            // exactly the regression estimand.
            covariates: truths
                .iter()
                .zip([2.0, 7.0])
                .map(|(&(name, beta), peak)| CovariateGen {
                    name: name.into(),
                    beta,
                    peak_month: peak,
                    amplitude: 1.0,
                    spatial_weight: 0.0,
                })
                .collect(),
            annual_scale: 5000.0,
            years: 2,
            seed: 400 + seed,
            ..SynthSpec::default()
        };
        let out = generate(&spec).map_err(|e| format!("generate failed: {e}"))?;

        let records = load_facilities_from(out.facilities_csv.as_bytes(), "synthetic")
            .map_err(|e| format!("ingest failed: {e}"))?;
        let reduced = reduce_to_series(&records);
        let mut stack = CovariateStack::load_from(out.covariates_csv.as_bytes(), "synthetic")
            .map_err(|e| format!("stack failed: {e}"))?;
        stack.set_lags_all(&[0]);

        let locations: Vec<(f64, f64)> =
            reduced.series.iter().map(|s| s.location).collect();
        let mut observations = Vec::new();
        for (idx, series) in reduced.series.iter().enumerate() {
            let curve = apply_offset_and_rescale(&series.proportions);
            let obs: Vec<Observation> = (1..=12)
                .map(|month| Observation { month, loc: idx, y: curve.get(month).ln() })
                .collect();
            let (kept, _) = filter_outliers(obs, -11.0);
            observations.extend(kept);
        }
        let mut design = Array2::zeros((observations.len(), 3));
        for (r, o) in observations.iter().enumerate() {
            let (lon, lat) = locations[o.loc];
            design[[r, 0]] = 1.0;
            for (c, &(name, _)) in truths.iter().enumerate() {
                design[[r, c + 1]] = stack
                    .value_at(name, o.month, lon, lat)
                    .map_err(|e| format!("value_at failed: {e}"))?;
            }
        }

        let settings = FitSettings { dic_draws: 10, ..FitSettings::default() };
        let fit_start = Hyperparameters::new(0.3, 0.3, 1.0, 0.5).unwrap();
        let model = fit(&observations, &design, &locations, &fit_start, &settings)
            .map_err(|e| format!("fit failed at seed {seed}: {e}"))?;

        for (c, &(_, beta)) in truths.iter().enumerate() {
            let mean = model.posterior.mean[c + 1];
            let sd = model.posterior.marginal_sd(c + 1);
            trials += 1;
            if (beta - mean).abs() <= 1.96 * sd {
                covered += 1;
            }
        }
    }
    let needed = (0.85 * trials as f64).ceil() as usize;
    if covered >= needed {
        Ok(format!("95% intervals covered truth in {covered}/{trials} trials"))
    } else {
        Err(format!("covered {covered}/{trials}, needed {needed}"))
    }
}

// ---------------------------------------------------------------------------
// 5. Entropy exactness.

fn c5_entropy() -> Result<String, String> {
    let uniform = kl_entropy(&ProportionCurve::uniform());
    let mut w = [0.0; 12];
    w[6] = 1.0;
    let point = kl_entropy(&ProportionCurve::from_weights(&w).unwrap());
    let log2_12 = 12f64.log2();
    if uniform.abs() <= 1e-12 && (point - log2_12).abs() <= 1e-12 {
        Ok(format!("uniform {uniform:.1e}, point mass off by {:.1e}", point - log2_12))
    } else {
        Err(format!("uniform {uniform}, point mass {point} vs {log2_12}"))
    }
}

// ---------------------------------------------------------------------------
// 6. Rescaled von Mises self-consistency.

/// exp(kappa cos(theta - mu)) / (2 pi I0(kappa)) via a direct power series,
/// independent of the library's Bessel evaluation.
fn vm_density(theta: f64, mu: f64, kappa: f64) -> f64 {
    let mut i0 = 1.0;
    let mut term = 1.0;
    for k in 1..200 {
        term *= (kappa / (2.0 * k as f64)).powi(2);
        i0 += term;
        if term < 1e-16 * i0 {
            break;
        }
    }
    (kappa * (theta - mu).cos()).exp() / (TAU * i0)
}

fn curve_from_density(f: impl Fn(f64) -> f64) -> ProportionCurve {
    let mut w = [0.0; 12];
    for m in 1..=12 {
        w[m - 1] = f(month_angle(m).value());
    }
    ProportionCurve::from_weights(&w).unwrap()
}

fn arc(a: f64, b: f64) -> f64 {
    Angle::new(a).arc_distance(Angle::new(b))
}

fn c6_von_mises() -> Result<String, String> {
    let start = Instant::now();
    let mut mean_ok = 0;
    let mut modality_ok = 0;
    let mut details = String::new();

    // 10 unimodal configurations.
    for k in 0..10usize {
        let mu = TAU * (k as f64 + 0.37) / 10.0;
        let kappa = [1.0, 2.0, 3.0, 5.0, 8.0][k % 5];
        let curve = curve_from_density(|t| vm_density(t, mu, kappa));
        let fitted = fit_rvm(&curve, 1).map_err(|e| format!("fit_rvm failed: {e}"))?;
        if arc(fitted.mu1.value(), mu) <= 0.1 {
            mean_ok += 1;
        } else {
            let _ = write!(details, " uni{k} mean off by {:.3};", arc(fitted.mu1.value(), mu));
        }
        let features = derive_features(&curve, 0.0015);
        if features.modality == Some(1) {
            modality_ok += 1;
        } else {
            let _ = write!(details, " uni{k} modality {:?};", features.modality);
        }
    }

    // 10 bimodal configurations.
    for k in 0..10usize {
        let mu1 = TAU * k as f64 / 10.0;
        let mu2 = mu1 + PI * (0.8 + 0.04 * (k % 5) as f64);
        let kappa1 = [3.0, 4.0, 6.0, 8.0, 5.0][k % 5];
        let kappa2 = [5.0, 3.0, 4.0, 6.0, 8.0][k % 5];
        let omega = 0.45 + 0.03 * (k % 5) as f64;
        let curve = curve_from_density(|t| {
            omega * vm_density(t, mu1, kappa1) + (1.0 - omega) * vm_density(t, mu2, kappa2)
        });
        let fitted = fit_rvm(&curve, 2).map_err(|e| format!("fit_rvm failed: {e}"))?;
        let fitted_means = [fitted.mu1.value(), fitted.mu2.value()];
        let d1 = fitted_means.iter().map(|&f| arc(f, mu1)).fold(f64::INFINITY, f64::min);
        let d2 = fitted_means.iter().map(|&f| arc(f, mu2)).fold(f64::INFINITY, f64::min);
        if d1 <= 0.1 && d2 <= 0.1 {
            mean_ok += 1;
        } else {
            let _ = write!(details, " bi{k} means off by {d1:.3}/{d2:.3};");
        }
        let features = derive_features(&curve, 0.0015);
        if features.modality == Some(2) {
            modality_ok += 1;
        } else {
            let _ = write!(details, " bi{k} modality {:?};", features.modality);
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    if mean_ok >= 18 && modality_ok >= 18 && elapsed < 30.0 {
        Ok(format!(
            "means within 0.1 rad in {mean_ok}/20, modality correct in {modality_ok}/20"
        ))
    } else {
        Err(format!(
            "means ok {mean_ok}/20, modality ok {modality_ok}/20, elapsed {elapsed:.1}s;{details}"
        ))
    }
}

// ---------------------------------------------------------------------------
// 7. Season membership rule: fitted density >= 1/12 iff the month is inside
//    a season, for every month of every test curve.

fn c7_season_membership() -> Result<String, String> {
    let mut curves: Vec<ProportionCurve> = Vec::new();
    // The von Mises configurations from criterion 6.
    for k in 0..10usize {
        let mu = TAU * (k as f64 + 0.37) / 10.0;
        let kappa = [1.0, 2.0, 3.0, 5.0, 8.0][k % 5];
        curves.push(curve_from_density(|t| vm_density(t, mu, kappa)));
        let mu2 = mu + PI * (0.8 + 0.04 * (k % 5) as f64);
        curves.push(curve_from_density(|t| {
            0.5 * vm_density(t, mu, kappa) + 0.5 * vm_density(t, mu2, 4.0)
        }));
    }
    // Random rough curves.
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    for _ in 0..30 {
        let mut w = [0.0; 12];
        for v in &mut w {
            *v = rng.gen::<f64>().powi(2) + 0.01;
        }
        curves.push(ProportionCurve::from_weights(&w).unwrap());
    }

    let mut checked = 0;
    for (i, curve) in curves.iter().enumerate() {
        let features = derive_features(curve, 0.0015);
        let Some(fit) = features.fit else { continue };
        let mut in_season = [false; 12];
        for s in &features.seasons {
            let mut m = s.start;
            loop {
                in_season[m - 1] = true;
                if m == s.end {
                    break;
                }
                m = m % 12 + 1;
            }
        }
        for m in 1..=12usize {
            let above = rvm_density(month_angle(m), &fit) >= 1.0 / 12.0;
            if above != in_season[m - 1] {
                return Err(format!(
                    "curve {i}, month {m}: density {} vs membership {}",
                    above, in_season[m - 1]
                ));
            }
            checked += 1;
        }
    }
    Ok(format!("membership rule exact on {checked} month checks"))
}

// ---------------------------------------------------------------------------
// 8. Circular summaries against a brute-force arc-distance oracle.

fn brute_force_median(sample: &[Angle]) -> Angle {
    let mut best = sample[0];
    let mut best_cost = f64::INFINITY;
    let mut points = sample.to_vec();
    points.sort_by(|a, b| a.value().total_cmp(&b.value()));
    for &c in &points {
        let cost: f64 = sample.iter().map(|&a| c.arc_distance(a)).sum();
        if cost < best_cost - 1e-12 {
            best = c;
            best_cost = cost;
        }
    }
    best
}

fn c8_circular_summaries() -> Result<String, String> {
    // {Dec, Jan, Feb}.
    let months = [12usize, 1, 2];
    let sample: Vec<Angle> = months.iter().map(|&m| month_angle(m)).collect();
    let median = circular_median(&sample).map_err(|e| e.to_string())?;
    let oracle = brute_force_median(&sample);
    if (median.value() - oracle.value()).abs() > 1e-12 {
        return Err(format!(
            "median {} disagrees with oracle {}",
            median.value(),
            oracle.value()
        ));
    }
    if median.arc_distance(month_angle(1)) > 1e-12 {
        return Err(format!("median is not January: {}", median.value()));
    }
    let dev = circular_deviation(&sample, median) * MONTHS_PER_RADIAN;
    if (dev - 2.0 / 3.0).abs() > 1e-12 {
        return Err(format!("deviation {dev} months, expected 2/3"));
    }

    // Rotation equivariance: the median of a rotated sample is the rotated
    // median, and the deviation is invariant. The sample has a unique
    // minimizer, so ties cannot flip under rotation.
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    for _ in 0..20 {
        let k = 1 + (rng.gen::<u64>() % 11) as usize;
        let rotated: Vec<Angle> = months
            .iter()
            .map(|&m| month_angle((m - 1 + k) % 12 + 1))
            .collect();
        let rotated_median = circular_median(&rotated).map_err(|e| e.to_string())?;
        let expected = month_angle((1 - 1 + k) % 12 + 1);
        if rotated_median.arc_distance(expected) > 1e-12 {
            return Err(format!(
                "rotation by {k}: median {} vs expected {}",
                rotated_median.value(),
                expected.value()
            ));
        }
        let rotated_dev = circular_deviation(&rotated, rotated_median) * MONTHS_PER_RADIAN;
        if (rotated_dev - dev).abs() > 1e-12 {
            return Err(format!("rotation by {k}: deviation {rotated_dev} vs {dev}"));
        }
    }
    Ok("median January, deviation 2/3 month, equivariant under 20 rotations".into())
}

// ---------------------------------------------------------------------------
// 9. Selection sanity: true covariates retained, duplicates pruned first.

fn selection_config(dir: &Path, seed: u64) -> PipelineConfig {
    PipelineConfig {
        facilities: dir.join("facilities.csv"),
        covariates: dir.join("covariates.csv"),
        api_grid: dir.join("api.csv"),
        outdir: dir.to_path_buf(),
        seed,
        ..PipelineConfig::default()
    }
}

fn c9_selection_sanity() -> Result<String, String> {
    let gen = |name: &str, beta: f64, peak: f64, amp: f64, sw: f64| CovariateGen {
        name: name.into(),
        beta,
        peak_month: peak,
        amplitude: amp,
        spatial_weight: sw,
    };
    let mut retained_both = 0;
    for rep in 0..20u64 {
        // Decoys get strong, distinct spatial modulation so they are far
        // from the two-dimensional annual-harmonic span of the true pair;
        // otherwise any subset of seasonal columns can absorb the signal
        // and "retaining the true covariates" is not well defined.
        let spec = SynthSpec {
            n_locations: 30,
            sigma_e2: 0.1,
            sigma_f2: 0.15,
            kappa: 3.163,
            a: 0.7,
            covariates: vec![
                gen("rain", 1.5, 2.0, 1.0, 0.4),
                gen("temp", 1.0, 7.0, 1.0, 0.6),
                gen("d1", 0.0, 4.0, 1.0, 1.2),
                gen("d2", 0.0, 10.0, 0.8, 2.0),
                gen("d3", 0.0, 0.0, 1.2, 3.0),
            ],
            annual_scale: 1000.0,
            years: 3,
            seed: rep,
            ..SynthSpec::default()
        };
        let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
        let config = selection_config(dir.path(), rep);
        cmd_synth(&config, &spec).map_err(|e| format!("synth failed: {e}"))?;
        cmd_prep(&config).map_err(|e| format!("prep failed: {e}"))?;
        let report = cmd_select(&config).map_err(|e| format!("select failed: {e}"))?;
        if ["rain", "temp"]
            .iter()
            .all(|t| report.final_covariates.iter().any(|c| c == t))
        {
            retained_both += 1;
        }
    }

    // VIF removes an exactly duplicated covariate before anything else.
    let mut duplicate_first = 0;
    for rep in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(950 + rep);
        let col = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..100).map(|_| rng.sample(StandardNormal)).collect()
        };
        let base = col(&mut rng);
        let columns = vec![
            ("evi".to_string(), col(&mut rng)),
            ("rain".to_string(), base.clone()),
            ("rain_copy".to_string(), base),
            ("temp".to_string(), col(&mut rng)),
        ];
        let (_, trace) = vif_prune(&columns, 10.0).map_err(|e| e.to_string())?;
        if let Some((name, vif)) = trace.first() {
            if (name == "rain" || name == "rain_copy") && vif.is_infinite() {
                duplicate_first += 1;
            }
        }
    }

    if retained_both >= 16 && duplicate_first == 20 {
        Ok(format!(
            "true covariates retained in {retained_both}/20, duplicate pruned first in {duplicate_first}/20"
        ))
    } else {
        Err(format!(
            "retained both in {retained_both}/20 (need 16), duplicate first in {duplicate_first}/20 (need 20)"
        ))
    }
}

// ---------------------------------------------------------------------------
// 10. End-to-end determinism (plus a truth-peak sanity check).

fn run_full_pipeline(dir: &Path, samples: usize) -> Result<(), String> {
    let spec = SynthSpec {
        n_locations: 10,
        sigma_e2: 0.05,
        sigma_f2: 0.1,
        kappa: 2.0,
        a: 0.5,
        covariates: vec![CovariateGen {
            name: "rain".into(),
            beta: 2.0,
            peak_month: 2.0,
            amplitude: 1.0,
            spatial_weight: 0.3,
        }],
        annual_scale: 2000.0,
        years: 2,
        seed: 5,
        ..SynthSpec::default()
    };
    let config = PipelineConfig {
        samples,
        single_pass: true,
        ..selection_config(dir, 5)
    };
    cmd_synth(&config, &spec).map_err(|e| format!("synth: {e}"))?;
    cmd_prep(&config).map_err(|e| format!("prep: {e}"))?;
    cmd_select(&config).map_err(|e| format!("select: {e}"))?;
    cmd_fit(&config, None).map_err(|e| format!("fit: {e}"))?;
    cmd_features(&config).map_err(|e| format!("features: {e}"))?;
    cmd_render(&config, &dir.join("features.csv"), &[]).map_err(|e| format!("render: {e}"))?;
    cmd_render(&config, &dir.join("mpi.csv"), &[]).map_err(|e| format!("render: {e}"))?;
    Ok(())
}

fn c10_determinism() -> Result<String, String> {
    let dir_a = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let dir_b = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    run_full_pipeline(dir_a.path(), 40)?;
    run_full_pipeline(dir_b.path(), 40)?;

    let mut names: Vec<String> = std::fs::read_dir(dir_a.path())
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    if names.is_empty() {
        return Err("pipeline produced no output files".into());
    }
    let mut compared = 0;
    for name in &names {
        let a = std::fs::read(dir_a.path().join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir_b.path().join(name)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{name} differs between runs"));
        }
        compared += 1;
    }

    // Sanity: major-season peaks track the generative truth.
    let truth_text =
        std::fs::read_to_string(dir_a.path().join("truth.json")).map_err(|e| e.to_string())?;
    let truth = SynthTruth::from_text(&truth_text).map_err(|e| e.to_string())?;
    let features =
        std::fs::read_to_string(dir_a.path().join("features.csv")).map_err(|e| e.to_string())?;
    let mut peaks_close = 0;
    let mut majors = 0;
    for line in features.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts[15] != "true" {
            continue;
        }
        let lon: f64 = parts[0].parse().unwrap();
        let lat: f64 = parts[1].parse().unwrap();
        let peak: i64 = parts[12].parse().map_err(|e| format!("bad peak: {e}"))?;
        let idx = truth
            .locations
            .iter()
            .position(|&(tlon, tlat)| (tlon - lon).abs() < 1e-9 && (tlat - lat).abs() < 1e-9)
            .ok_or("feature row does not match a truth location")?;
        let true_peak = truth.proportions[idx]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i as i64 + 1)
            .unwrap();
        let d = (peak - true_peak).rem_euclid(12).min((true_peak - peak).rem_euclid(12));
        majors += 1;
        if d <= 1 {
            peaks_close += 1;
        }
    }
    if majors == 0 || (peaks_close as f64) < 0.7 * majors as f64 {
        return Err(format!(
            "major-season peak within 1 month of truth at only {peaks_close}/{majors} facilities"
        ));
    }
    Ok(format!(
        "{compared} output files byte-identical; truth peak matched at {peaks_close}/{majors} facilities"
    ))
}

// ---------------------------------------------------------------------------
// 11. Desk-scale performance.

fn c11_performance() -> Result<String, String> {
    let start = Instant::now();
    let gen = |name: &str, beta: f64, peak: f64| CovariateGen {
        name: name.into(),
        beta,
        peak_month: peak,
        amplitude: 1.0,
        spatial_weight: 0.4,
    };
    let spec = SynthSpec {
        n_locations: 200,
        grid_size: 20,
        sigma_e2: 0.15,
        sigma_f2: 0.15,
        kappa: 3.163,
        a: 0.7,
        covariates: vec![
            gen("rain", 1.2, 2.0),
            gen("temp", 0.8, 6.0),
            gen("ndvi", 0.0, 4.0),
            gen("evi", 0.0, 9.0),
            gen("lst", 0.0, 11.0),
        ],
        annual_scale: 800.0,
        years: 3,
        seed: 42,
        ..SynthSpec::default()
    };
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;

    // 400-point prediction grid strictly inside the bounding box.
    let mut targets = String::from("lon,lat\n");
    for iy in 0..20 {
        for ix in 0..20 {
            let lon = 44.0 + 6.0 * (ix as f64 + 0.5) / 20.0;
            let lat = -24.0 + 10.0 * (iy as f64 + 0.5) / 20.0;
            let _ = writeln!(targets, "{lon},{lat}");
        }
    }
    std::fs::write(dir.path().join("targets.csv"), targets).map_err(|e| e.to_string())?;

    let config = PipelineConfig {
        targets: Some(dir.path().join("targets.csv")),
        samples: 100,
        max_lag: 1,
        threads: 4,
        ..selection_config(dir.path(), 42)
    };
    cmd_synth(&config, &spec).map_err(|e| format!("synth: {e}"))?;
    cmd_prep(&config).map_err(|e| format!("prep: {e}"))?;
    cmd_select(&config).map_err(|e| format!("select: {e}"))?;
    cmd_fit(&config, None).map_err(|e| format!("fit: {e}"))?;
    let summary = cmd_features(&config).map_err(|e| format!("features: {e}"))?;
    cmd_render(&config, &dir.path().join("mpi.csv"), &[]).map_err(|e| format!("render: {e}"))?;

    let elapsed = start.elapsed().as_secs_f64();
    if summary.n_targets != 400 {
        return Err(format!("expected 400 targets, predicted {}", summary.n_targets));
    }
    if elapsed < 900.0 {
        Ok(format!(
            "200 locations, 10 candidate columns, 100 samples, 400 targets in {elapsed:.0}s"
        ))
    } else {
        Err(format!("pipeline took {elapsed:.0}s, budget 900s"))
    }
}
