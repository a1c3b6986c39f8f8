//! Covariate screening by variance inflation factors and backwards model
//! selection by DIC, with the random test split and the Morton-order
//! training halves.

use ndarray::{Array1, Array2};
use ndarray_linalg::LeastSquaresSvd;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::FacilitySeries;
use crate::stmodel::{
    dic, fit, latent_posterior, FitSettings, FittedModel, Hyperparameters, Observation,
};

/// Covariates at or above this VIF get pruned.
pub const VIF_THRESHOLD: f64 = 10.0;
/// Fraction of facilities held out from fitting.
pub const TEST_FRACTION: f64 = 0.30;

/// Everything the `select` command decided, one decision per line when
/// serialized.
#[derive(Debug, Clone, Default)]
pub struct SelectionReport {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// Covariates removed by VIF pruning, in removal order.
    pub vif_trace: Vec<(String, f64)>,
    /// (model covariates, DIC) along the accepted deletion path.
    pub dic_trace: Vec<(Vec<String>, f64)>,
    pub final_covariates: Vec<String>,
    /// Skipped candidates and other non-fatal events.
    pub log: Vec<String>,
}

const REPORT_HEADER: &str = "SEASMAP-SELECTION v1";

impl SelectionReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(REPORT_HEADER);
        out.push('\n');
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!("train {}\n", self.train_ids.join(",")));
        out.push_str(&format!("test {}\n", self.test_ids.join(",")));
        for (name, vif) in &self.vif_trace {
            out.push_str(&format!("vif-removed {name} {vif}\n"));
        }
        for (names, dic) in &self.dic_trace {
            out.push_str(&format!("dic {} {dic}\n", join_or_dash(names)));
        }
        for note in &self.log {
            out.push_str(&format!("note {note}\n"));
        }
        out.push_str(&format!("final {}\n", join_or_dash(&self.final_covariates)));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(Error::Validation(format!(
                "not a selection report: missing {REPORT_HEADER:?} header"
            )));
        }
        let mut report = SelectionReport::default();
        let bad = |line: &str| Error::Validation(format!("malformed report line: {line:?}"));
        for line in lines {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "seed" => report.seed = rest.parse().map_err(|_| bad(line))?,
                "train" => report.train_ids = split_ids(rest),
                "test" => report.test_ids = split_ids(rest),
                "vif-removed" => {
                    let (name, vif) = rest.rsplit_once(' ').ok_or_else(|| bad(line))?;
                    report
                        .vif_trace
                        .push((name.to_string(), vif.parse().map_err(|_| bad(line))?));
                }
                "dic" => {
                    let (names, dic) = rest.rsplit_once(' ').ok_or_else(|| bad(line))?;
                    report
                        .dic_trace
                        .push((split_or_dash(names), dic.parse().map_err(|_| bad(line))?));
                }
                "note" => report.log.push(rest.to_string()),
                "final" => report.final_covariates = split_or_dash(rest),
                "" => {}
                _ => return Err(bad(line)),
            }
        }
        Ok(report)
    }
}

fn join_or_dash(names: &[String]) -> String {
    if names.is_empty() {
        "-".to_string()
    } else {
        names.join(",")
    }
}

fn split_or_dash(s: &str) -> Vec<String> {
    if s == "-" {
        Vec::new()
    } else {
        split_ids(s)
    }
}

fn split_ids(s: &str) -> Vec<String> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(',').map(str::to_string).collect()
    }
}

/// Uniform random facility split without replacement; the test set gets
/// round(n * test_fraction) facilities.
pub fn split_train_test(
    facilities: &[FacilitySeries],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<FacilitySeries>, Vec<FacilitySeries>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = facilities.len();
    if n < 4 {
        return Err(Error::Validation(format!(
            "need at least 4 facilities to split, got {n}"
        )));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let test_set: std::collections::BTreeSet<usize> =
        indices[..n_test].iter().copied().collect();
    let mut train = Vec::with_capacity(n - n_test);
    let mut test = Vec::with_capacity(n_test);
    for (i, f) in facilities.iter().enumerate() {
        if test_set.contains(&i) {
            test.push(f.clone());
        } else {
            train.push(f.clone());
        }
    }
    Ok((train, test))
}

/// R-squared of regressing `y` on `predictors` plus an intercept, via SVD
/// least squares (rank-deficient predictors are fine).
fn r_squared(y: &[f64], predictors: &[&[f64]]) -> f64 {
    let n = y.len();
    let p = predictors.len() + 1;
    let mut x = Array2::zeros((n, p));
    for r in 0..n {
        x[[r, 0]] = 1.0;
        for (c, col) in predictors.iter().enumerate() {
            x[[r, c + 1]] = col[r];
        }
    }
    let yv = Array1::from_vec(y.to_vec());
    let Ok(sol) = x.least_squares(&yv) else {
        return 1.0;
    };
    let fitted = x.dot(&sol.solution);
    let mean = yv.sum() / n as f64;
    let ss_tot: f64 = yv.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        // Constant column: perfectly explained by the intercept.
        return 1.0;
    }
    let ss_res: f64 = yv
        .iter()
        .zip(fitted.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
}

fn vif_of(target: usize, columns: &[(String, Vec<f64>)], active: &[usize]) -> f64 {
    let predictors: Vec<&[f64]> = active
        .iter()
        .filter(|&&k| k != target)
        .map(|&k| columns[k].1.as_slice())
        .collect();
    let r2 = r_squared(&columns[target].1, &predictors);
    if r2 >= 1.0 - 1e-10 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - r2)
    }
}

/// Iteratively removes the covariate with the largest VIF until all
/// remaining VIFs are below `threshold`. Ties break alphabetically; exact
/// collinearity counts as infinite VIF.
pub fn vif_prune(
    columns: &[(String, Vec<f64>)],
    threshold: f64,
) -> Result<(Vec<String>, Vec<(String, f64)>)> {
    if columns.len() < 2 {
        return Err(Error::Validation(format!(
            "VIF pruning needs at least 2 covariates, got {}",
            columns.len()
        )));
    }
    let n = columns[0].1.len();
    if columns.iter().any(|(_, v)| v.len() != n) {
        return Err(Error::Validation("covariate columns differ in length".into()));
    }
    if n <= columns.len() {
        return Err(Error::Validation(format!(
            "VIF pruning needs more observations ({n}) than covariates ({})",
            columns.len()
        )));
    }

    // Alphabetical scan order makes the max-VIF tie-break alphabetical.
    let mut active: Vec<usize> = (0..columns.len()).collect();
    active.sort_by(|&i, &j| columns[i].0.cmp(&columns[j].0));

    let mut trace = Vec::new();
    while active.len() >= 2 {
        let mut worst: Option<(usize, f64)> = None;
        for (pos, &k) in active.iter().enumerate() {
            let v = vif_of(k, columns, &active);
            if worst.is_none_or(|(_, wv)| v > wv) {
                worst = Some((pos, v));
            }
        }
        let (pos, vif) = worst.unwrap();
        if vif < threshold {
            break;
        }
        let removed = active.remove(pos);
        trace.push((columns[removed].0.clone(), vif));
    }
    let mut kept: Vec<String> = active.iter().map(|&k| columns[k].0.clone()).collect();
    kept.sort();
    Ok((kept, trace))
}

/// Fixed inputs for one backwards-selection run.
pub struct SelectionProblem<'a> {
    pub observations: &'a [Observation],
    pub locations: &'a [(f64, f64)],
    /// Named covariate columns aligned with `observations`.
    pub columns: &'a [(String, Vec<f64>)],
    pub start: Hyperparameters,
    pub settings: FitSettings,
}

impl SelectionProblem<'_> {
    fn design_for(&self, subset: &[String]) -> Result<Array2<f64>> {
        let n = self.observations.len();
        let mut x = Array2::zeros((n, subset.len() + 1));
        for r in 0..n {
            x[[r, 0]] = 1.0;
        }
        for (c, name) in subset.iter().enumerate() {
            let col = self
                .columns
                .iter()
                .find(|(cn, _)| cn == name)
                .ok_or_else(|| Error::Validation(format!("unknown covariate {name:?}")))?;
            for r in 0..n {
                x[[r, c + 1]] = col.1[r];
            }
        }
        Ok(x)
    }

    /// Full hyperparameter estimation for the given covariate subset (plus
    /// intercept).
    pub fn fit_for(&self, subset: &[String]) -> Result<FittedModel> {
        let design = self.design_for(subset)?;
        fit(
            self.observations,
            &design,
            self.locations,
            &self.start,
            &self.settings,
        )
    }

    /// DIC of the covariate subset with hyperparameters held fixed, so the
    /// deviances of competing subsets share one noise-variance scale. Only
    /// the latent posterior is recomputed.
    pub fn dic_at(&self, subset: &[String], hyper: &Hyperparameters) -> Result<f64> {
        let design = self.design_for(subset)?;
        let posterior = latent_posterior(
            self.observations,
            &design,
            self.locations,
            hyper,
            self.settings.beta_prior_var,
            self.settings.stationary_ar1,
        )?;
        Ok(dic(
            self.observations,
            &design,
            &posterior,
            hyper,
            self.settings.dic_draws,
            self.settings.dic_seed,
        ))
    }
}

/// Outcome of one backwards pass.
#[derive(Debug, Clone)]
pub struct BackwardsResult {
    pub final_covariates: Vec<String>,
    pub dic_trace: Vec<(Vec<String>, f64)>,
    pub log: Vec<String>,
}

/// Backwards DIC selection: repeatedly removes the single covariate whose
/// deletion lowers DIC the most, stopping when no deletion strictly
/// improves. The intercept is never a removal candidate. Fit failures skip
/// that candidate and are logged.
///
/// Hyperparameters are estimated once on the full candidate model and held
/// fixed across deletions; otherwise each subset refits its own noise
/// variance and the deviances are not comparable (a smaller model can ride
/// the noise variance toward zero and win on scale alone).
pub fn backwards_select(
    problem: &SelectionProblem,
    candidates: &[String],
) -> Result<BackwardsResult> {
    let mut current: Vec<String> = candidates.to_vec();
    current.sort();
    let mut log = Vec::new();
    let full = problem.fit_for(&current)?;
    let hyper = full.hyper;
    let mut current_dic = full.dic;
    let mut dic_trace = vec![(current.clone(), current_dic)];

    while !current.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..current.len() {
            let mut subset = current.clone();
            subset.remove(i);
            match problem.dic_at(&subset, &hyper) {
                // Strictly-greater comparison keeps the alphabetically first
                // candidate on ties.
                Ok(d) => {
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((i, d));
                    }
                }
                Err(e) => log.push(format!(
                    "skipped deleting {}: {e}",
                    current[i]
                )),
            }
        }
        match best {
            Some((i, d)) if d < current_dic => {
                current.remove(i);
                current_dic = d;
                dic_trace.push((current.clone(), d));
            }
            _ => break,
        }
    }

    Ok(BackwardsResult {
        final_covariates: current,
        dic_trace,
        log,
    })
}

/// 16-bit-per-axis Morton (interleaved bits) code of a point normalized to
/// the bounding box of the whole set.
fn morton_code(lon: f64, lat: f64, bbox: (f64, f64, f64, f64)) -> u64 {
    let (min_lon, min_lat, max_lon, max_lat) = bbox;
    let norm = |v: f64, lo: f64, hi: f64| {
        if hi > lo {
            (((v - lo) / (hi - lo)) * 65535.0).round() as u64
        } else {
            0
        }
    };
    let x = norm(lon, min_lon, max_lon);
    let y = norm(lat, min_lat, max_lat);
    let mut code = 0u64;
    for bit in 0..16 {
        code |= ((x >> bit) & 1) << (2 * bit);
        code |= ((y >> bit) & 1) << (2 * bit + 1);
    }
    code
}

/// Splits training facilities into two halves of equal size (plus or minus
/// one) with interleaved spatial coverage: sort by Morton code, then
/// alternate. The seed only chooses which half takes the first facility.
pub fn split_training_halves(
    train: &[FacilitySeries],
    seed: u64,
) -> (Vec<FacilitySeries>, Vec<FacilitySeries>) {
    let bbox = train.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |acc, f| {
            (
                acc.0.min(f.location.0),
                acc.1.min(f.location.1),
                acc.2.max(f.location.0),
                acc.3.max(f.location.1),
            )
        },
    );
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by_key(|&i| {
        (
            morton_code(train[i].location.0, train[i].location.1, bbox),
            train[i].facility_id.clone(),
        )
    });
    let offset = (seed % 2) as usize;
    let mut halves = (Vec::new(), Vec::new());
    for (rank, &i) in order.iter().enumerate() {
        if (rank + offset) % 2 == 0 {
            halves.0.push(train[i].clone());
        } else {
            halves.1.push(train[i].clone());
        }
    }
    halves
}
