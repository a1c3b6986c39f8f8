//! Seasonality features from proportion curves: entropy against the uniform
//! reference, the API-weighted seasonality index, monthly incidence,
//! rescaled von Mises fitting, transmission-season extraction, and
//! cross-sample uncertainty summaries.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::curve::ProportionCurve;
use crate::error::{Error, Result};
use crate::numerics::{
    angle_to_month, bessel_i0, circular_deviation, circular_median, month_angle, Angle,
    NelderMead, MONTHS_PER_RADIAN,
};

/// Algorithm threshold on the 1-component fit's sum of squared errors above
/// which a second von Mises component is fitted.
pub const ERROR_THRESHOLD: f64 = 0.0015;

/// Entropies at or below this count as zero (exactly uniform curve).
pub const ENTROPY_TOLERANCE: f64 = 1e-12;

const UNIFORM_LEVEL: f64 = 1.0 / 12.0;

/// Kullback-Leibler divergence of the curve from the uniform month
/// distribution, in bits: D = sum_i p_i log2(12 p_i). Zero entries
/// contribute zero.
pub fn kl_entropy(curve: &ProportionCurve) -> f64 {
    curve
        .as_slice()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (12.0 * p).log2())
        .sum()
}

/// Seasonality index S = D * api / api_max: entropy weighted by relative
/// transmission amplitude.
pub fn seasonality_index(curve: &ProportionCurve, api: f64, api_max: f64) -> Result<f64> {
    if api_max <= 0.0 {
        return Err(Error::Validation(format!(
            "api_max must be positive, got {api_max}"
        )));
    }
    if !(0.0..=api_max).contains(&api) {
        return Err(Error::Validation(format!(
            "api must lie in [0, api_max], got {api} with api_max {api_max}"
        )));
    }
    Ok(kl_entropy(curve) * api / api_max)
}

/// Monthly incidence MPI_i = p_i * api; sums to api.
pub fn monthly_incidence(curve: &ProportionCurve, api: f64) -> [f64; 12] {
    assert!(api >= 0.0, "api must be nonnegative");
    let mut out = [0.0; 12];
    for (o, p) in out.iter_mut().zip(curve.as_slice()) {
        *o = p * api;
    }
    out
}

/// ln I0(x), stable for large x where I0 itself overflows (x > ~709).
fn log_bessel_i0(x: f64) -> f64 {
    if x <= 700.0 {
        bessel_i0(x).ln()
    } else {
        // ln of the asymptotic expansion e^x / sqrt(2 pi x) * sum_k t_k with
        // t_k = prod_{j<=k} (2j - 1)^2 / (k! (8x)^k), truncated when the
        // terms stop shrinking. At x > 700 the floor is far below 1e-12.
        let mut series = 1.0;
        let mut term = 1.0;
        for k in 1..30u32 {
            let odd = (2 * k - 1) as f64;
            let next = term * odd * odd / (k as f64 * 8.0 * x);
            if next.abs() >= term.abs() {
                break;
            }
            series += next;
            term = next;
            if next.abs() < 1e-17 {
                break;
            }
        }
        x - 0.5 * (TAU * x).ln() + series.ln()
    }
}

/// One von Mises component density exp(kappa cos(theta - mu)) / (2 pi I0(kappa)).
fn vm_component(theta: Angle, mu: Angle, kappa: f64) -> f64 {
    (kappa * (theta.value() - mu.value()).cos() - TAU.ln() - log_bessel_i0(kappa)).exp()
}

/// A rescaled von Mises mixture fitted to a proportion curve. For one
/// component, omega = 1 and (mu2, kappa2) are unused.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RvMFit {
    pub s: f64,
    pub omega: f64,
    pub mu1: Angle,
    pub kappa1: f64,
    pub mu2: Angle,
    pub kappa2: f64,
    pub n_components: u8,
    pub sse: f64,
}

/// Fitted density f(theta) = s [omega f1 + (1 - omega) f2].
pub fn rvm_density(theta: Angle, fit: &RvMFit) -> f64 {
    let f1 = vm_component(theta, fit.mu1, fit.kappa1);
    if fit.n_components == 1 {
        return fit.s * f1;
    }
    let f2 = vm_component(theta, fit.mu2, fit.kappa2);
    fit.s * (fit.omega * f1 + (1.0 - fit.omega) * f2)
}

/// Concentrations above this are rejected during fitting: on a 12-point grid
/// nothing sharper is identifiable.
const KAPPA_CAP: f64 = 1e3;

fn grid_sse(curve: &ProportionCurve, density: impl Fn(Angle) -> f64) -> f64 {
    (1..=12)
        .map(|m| {
            let d = density(month_angle(m));
            (d - curve.get(m)).powi(2)
        })
        .sum()
}

/// Cyclic local maxima of the curve, sorted by height descending.
fn local_maxima(curve: &ProportionCurve) -> Vec<usize> {
    let p = curve.as_slice();
    let mut maxima: Vec<usize> = (1..=12usize)
        .filter(|&m| {
            let v = p[m - 1];
            let prev = p[(m + 10) % 12];
            let next = p[m % 12];
            v >= prev && v >= next && (v > prev || v > next)
        })
        .collect();
    maxima.sort_by(|&a, &b| p[b - 1].total_cmp(&p[a - 1]));
    maxima
}

/// Least-squares fit of a rescaled von Mises density (1 or 2 components) to
/// the curve on the 12-point grid, by Nelder-Mead from multiple starts
/// derived from the curve's top local maxima. For 2 components the major
/// component (higher fitted density at its mean) is relabeled to be first.
pub fn fit_rvm(curve: &ProportionCurve, components: u8) -> Result<RvMFit> {
    if !(components == 1 || components == 2) {
        return Err(Error::Validation(format!(
            "von Mises fits support 1 or 2 components, got {components}"
        )));
    }
    if kl_entropy(curve) <= ENTROPY_TOLERANCE {
        return Err(Error::Validation(
            "cannot fit a von Mises density to an exactly uniform curve".into(),
        ));
    }

    let maxima = local_maxima(curve);
    let top1 = maxima.first().copied().unwrap_or(1);
    // Second start mean: second local maximum, or the opposite month.
    let top2 = maxima.get(1).copied().unwrap_or((top1 + 5) % 12 + 1);
    let s0 = (TAU / 12.0).ln();

    let optimizer = NelderMead {
        max_iter: 600,
        ..NelderMead::default()
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |point: Vec<f64>, value: f64| {
        if value.is_finite() && best.as_ref().is_none_or(|(_, bv)| value < *bv) {
            best = Some((point, value));
        }
    };

    if components == 1 {
        let objective = |p: &[f64]| {
            let (s, mu, kappa) = (p[0].exp(), Angle::new(p[1]), p[2].exp());
            if kappa > KAPPA_CAP {
                return f64::INFINITY;
            }
            grid_sse(curve, |theta| s * vm_component(theta, mu, kappa))
        };
        for &peak in &[top1, top2] {
            for kappa0 in [0.5, 2.0, 8.0] {
                let start = [s0, month_angle(peak).value(), f64::ln(kappa0)];
                if let Ok(m) = optimizer.minimize(objective, &start) {
                    consider(m.point, m.value);
                }
            }
        }
        let (point, value) = best
            .ok_or_else(|| Error::Numerical("all von Mises fit starts failed".into()))?;
        return Ok(RvMFit {
            s: point[0].exp(),
            omega: 1.0,
            mu1: Angle::new(point[1]),
            kappa1: point[2].exp(),
            mu2: Angle::new(point[1]),
            kappa2: 0.0,
            n_components: 1,
            sse: value,
        });
    }

    let objective = |p: &[f64]| {
        let s = p[0].exp();
        let omega = 1.0 / (1.0 + (-p[1]).exp());
        let (mu1, kappa1) = (Angle::new(p[2]), p[3].exp());
        let (mu2, kappa2) = (Angle::new(p[4]), p[5].exp());
        if kappa1 > KAPPA_CAP || kappa2 > KAPPA_CAP {
            return f64::INFINITY;
        }
        grid_sse(curve, |theta| {
            s * (omega * vm_component(theta, mu1, kappa1)
                + (1.0 - omega) * vm_component(theta, mu2, kappa2))
        })
    };

    let v1 = curve.get(top1);
    let v2 = curve.get(top2);
    let omega0 = (v1 / (v1 + v2)).clamp(0.05, 0.95);
    let q0 = (omega0 / (1.0 - omega0)).ln();
    for kappa0 in [2.0f64, 6.0] {
        let start = [
            s0,
            q0,
            month_angle(top1).value(),
            kappa0.ln(),
            month_angle(top2).value(),
            kappa0.ln(),
        ];
        if let Ok(m) = optimizer.minimize(objective, &start) {
            consider(m.point, m.value);
        }
    }
    // The 1-component solution embedded with omega near 1: guarantees the
    // 2-component SSE never exceeds the 1-component SSE.
    if let Ok(one) = fit_rvm(curve, 1) {
        let start = [
            one.s.ln(),
            16.0,
            one.mu1.value(),
            one.kappa1.max(1e-6).ln(),
            Angle::new(one.mu1.value() + std::f64::consts::PI).value(),
            0.5f64.ln(),
        ];
        if let Ok(m) = optimizer.minimize(objective, &start) {
            consider(m.point, m.value);
        }
    }

    let (point, value) =
        best.ok_or_else(|| Error::Numerical("all von Mises fit starts failed".into()))?;
    let mut fit = RvMFit {
        s: point[0].exp(),
        omega: 1.0 / (1.0 + (-point[1]).exp()),
        mu1: Angle::new(point[2]),
        kappa1: point[3].exp(),
        mu2: Angle::new(point[4]),
        kappa2: point[5].exp(),
        n_components: 2,
        sse: value,
    };
    // Relabel so component 1 is the major one.
    let d1 = fit.s * fit.omega * vm_component(fit.mu1, fit.mu1, fit.kappa1);
    let d2 = fit.s * (1.0 - fit.omega) * vm_component(fit.mu2, fit.mu2, fit.kappa2);
    if d2 > d1 {
        std::mem::swap(&mut fit.mu1, &mut fit.mu2);
        std::mem::swap(&mut fit.kappa1, &mut fit.kappa2);
        fit.omega = 1.0 - fit.omega;
    }
    Ok(fit)
}

/// One transmission season: a maximal cyclic run of months whose fitted
/// density is at or above 1/12. Months are 1-based; `end` is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Season {
    pub start: usize,
    pub end: usize,
    pub peak: usize,
    pub length: usize,
    pub major: bool,
}

/// Features of a single proportion curve.
#[derive(Debug, Clone)]
pub struct SeasonFeatures {
    /// KL entropy in bits.
    pub entropy: f64,
    /// Seasonality index; zero until a caller weights the entropy by API.
    pub index: f64,
    /// Number of seasons; None when the curve is uniform (no seasons).
    pub modality: Option<u8>,
    pub seasons: Vec<Season>,
    /// Set by callers for facilities that reported no cases at all.
    pub zero_case: bool,
    pub fit: Option<RvMFit>,
}

fn cyclic_length(start: usize, end: usize) -> usize {
    (end + 12 - start) % 12 + 1
}

fn next_month(m: usize) -> usize {
    m % 12 + 1
}

fn prev_month(m: usize) -> usize {
    (m + 10) % 12 + 1
}

/// Transmission-season extraction: fit one von Mises component, escalate to
/// two if the squared error exceeds `error_threshold`, then read seasons off
/// the fitted density at the month grid.
pub fn derive_features(curve: &ProportionCurve, error_threshold: f64) -> SeasonFeatures {
    let entropy = kl_entropy(curve);
    let none = SeasonFeatures {
        entropy,
        index: 0.0,
        modality: None,
        seasons: Vec::new(),
        zero_case: false,
        fit: None,
    };
    if entropy <= ENTROPY_TOLERANCE {
        return none;
    }
    let Ok(fit1) = fit_rvm(curve, 1) else {
        return none;
    };
    let fit = if fit1.sse > error_threshold {
        fit_rvm(curve, 2).unwrap_or(fit1)
    } else {
        fit1
    };

    let density: Vec<f64> = (1..=12).map(|m| rvm_density(month_angle(m), &fit)).collect();
    let in_season = |m: usize| density[m - 1] >= UNIFORM_LEVEL;
    let n_in = (1..=12).filter(|&m| in_season(m)).count();

    let mut seasons: Vec<Season> = Vec::new();
    if n_in == 12 {
        // Year-round transmission: one season wrapping the whole year,
        // starting after the weakest month.
        let weakest = (1..=12)
            .min_by(|&a, &b| density[a - 1].total_cmp(&density[b - 1]))
            .unwrap();
        seasons.push(Season {
            start: next_month(weakest),
            end: weakest,
            peak: 0,
            length: 12,
            major: false,
        });
    } else if n_in > 0 {
        for m in 1..=12 {
            if in_season(m) && !in_season(prev_month(m)) {
                let mut end = m;
                while in_season(next_month(end)) {
                    end = next_month(end);
                }
                seasons.push(Season {
                    start: m,
                    end,
                    peak: 0,
                    length: cyclic_length(m, end),
                    major: false,
                });
            }
        }
    }
    if seasons.is_empty() {
        return SeasonFeatures { fit: Some(fit), ..none };
    }

    // Component means, with the fitted density value at each mean.
    let mut means: Vec<(usize, f64)> = vec![(
        angle_to_month(fit.mu1),
        rvm_density(fit.mu1, &fit),
    )];
    if fit.n_components == 2 {
        means.push((angle_to_month(fit.mu2), rvm_density(fit.mu2, &fit)));
    }

    let contains = |s: &Season, m: usize| {
        let mut c = s.start;
        loop {
            if c == m {
                return true;
            }
            if c == s.end {
                return false;
            }
            c = next_month(c);
        }
    };

    // Peak per season: the strongest component mean inside it, else the
    // highest-density month of the run.
    let mut strengths: Vec<f64> = Vec::with_capacity(seasons.len());
    for s in seasons.iter_mut() {
        let best_mean = means
            .iter()
            .filter(|(m, _)| contains(s, *m))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match best_mean {
            Some(&(m, d)) => {
                s.peak = m;
                strengths.push(d);
            }
            None => {
                let mut peak = s.start;
                let mut c = s.start;
                loop {
                    if density[c - 1] > density[peak - 1] {
                        peak = c;
                    }
                    if c == s.end {
                        break;
                    }
                    c = next_month(c);
                }
                s.peak = peak;
                strengths.push(density[peak - 1]);
            }
        }
    }
    let major_idx = strengths
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    seasons[major_idx].major = true;

    SeasonFeatures {
        entropy,
        index: 0.0,
        modality: Some(seasons.len() as u8),
        seasons,
        zero_case: false,
        fit: Some(fit),
    }
}

/// Linear-interpolation sample quantile of already-sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Cross-sample summary of one season slot (rank 1 = major).
#[derive(Debug, Clone)]
pub struct SeasonSummary {
    pub rank: usize,
    pub start_month: usize,
    pub start_dev_months: f64,
    pub end_month: usize,
    pub end_dev_months: f64,
    pub peak_month: usize,
    pub peak_dev_months: f64,
    pub length_months: f64,
    pub major: bool,
}

/// Majority-vote modality with circular month summaries over the samples
/// supporting the majority.
#[derive(Debug, Clone)]
pub struct UncertaintySummary {
    pub modality: Option<u8>,
    /// Fraction of season-bearing samples voting the majority modality.
    pub modality_probability: f64,
    /// Set when the vote was an exact 50/50 tie, resolved toward unimodal.
    pub tie_flagged: bool,
    /// Fraction of all samples not used in the month summaries.
    pub discarded_fraction: f64,
    pub seasons: Vec<SeasonSummary>,
    pub entropy_median: f64,
    pub index_median: f64,
    pub index_lo95: f64,
    pub index_hi95: f64,
}

fn month_summary(months: &[usize]) -> (usize, f64) {
    let angles: Vec<Angle> = months.iter().map(|&m| month_angle(m)).collect();
    let median = circular_median(&angles).expect("non-empty month sample");
    let dev = circular_deviation(&angles, median) * MONTHS_PER_RADIAN;
    (angle_to_month(median), dev)
}

/// Summarizes per-sample features: modality by majority vote, start/end/peak
/// by circular median and deviation over the majority samples, index by
/// median and central 95% interval.
pub fn summarize_samples(
    samples: &[SeasonFeatures],
    index_samples: &[f64],
) -> UncertaintySummary {
    assert!(!samples.is_empty(), "no samples to summarize");
    let entropy_median = quantile(&sorted(&samples.iter().map(|s| s.entropy).collect::<Vec<_>>()), 0.5);
    let (index_median, index_lo95, index_hi95) = if index_samples.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let s = sorted(index_samples);
        (quantile(&s, 0.5), quantile(&s, 0.025), quantile(&s, 0.975))
    };

    let voters: Vec<&SeasonFeatures> =
        samples.iter().filter(|s| s.modality.is_some()).collect();
    if voters.is_empty() {
        return UncertaintySummary {
            modality: None,
            modality_probability: 1.0,
            tie_flagged: false,
            discarded_fraction: 0.0,
            seasons: Vec::new(),
            entropy_median,
            index_median,
            index_lo95,
            index_hi95,
        };
    }

    let votes_uni = voters.iter().filter(|s| s.modality == Some(1)).count();
    let votes_multi = voters.len() - votes_uni;
    let tie = votes_uni == votes_multi;
    // Ties resolve toward unimodal.
    let winner: u8 = if votes_uni >= votes_multi { 1 } else { 2 };
    let winner_votes = if winner == 1 { votes_uni } else { votes_multi };
    let majority: Vec<&SeasonFeatures> = voters
        .iter()
        .filter(|s| (s.modality == Some(1)) == (winner == 1))
        .copied()
        .collect();

    // Season slots: major first, then remaining seasons by start month.
    let slot_count = majority
        .iter()
        .map(|s| s.seasons.len())
        .min()
        .unwrap_or(0);
    let mut seasons = Vec::with_capacity(slot_count);
    for rank in 1..=slot_count {
        let mut starts = Vec::new();
        let mut ends = Vec::new();
        let mut peaks = Vec::new();
        let mut lengths = Vec::new();
        for s in &majority {
            let mut ordered: Vec<&Season> = s.seasons.iter().collect();
            ordered.sort_by_key(|x| (!x.major, x.start));
            let season = ordered[rank - 1];
            starts.push(season.start);
            ends.push(season.end);
            peaks.push(season.peak);
            lengths.push(season.length as f64);
        }
        let (start_month, start_dev_months) = month_summary(&starts);
        let (end_month, end_dev_months) = month_summary(&ends);
        let (peak_month, peak_dev_months) = month_summary(&peaks);
        seasons.push(SeasonSummary {
            rank,
            start_month,
            start_dev_months,
            end_month,
            end_dev_months,
            peak_month,
            peak_dev_months,
            length_months: quantile(&sorted(&lengths), 0.5),
            major: rank == 1,
        });
    }

    UncertaintySummary {
        modality: Some(winner),
        modality_probability: winner_votes as f64 / voters.len() as f64,
        tie_flagged: tie,
        discarded_fraction: 1.0 - majority.len() as f64 / samples.len() as f64,
        seasons,
        entropy_median,
        index_median,
        index_lo95,
        index_hi95,
    }
}

/// Index categories from quartiles of the positive index values, computed
/// separately per modality group. Below the first quartile is "Low", above
/// the third is "High", in between "Medium"; zero index or no seasons is
/// "Non-seasonal".
pub fn assign_categories(entries: &[(Option<u8>, f64)]) -> Vec<&'static str> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for &(modality, index) in entries {
        if let Some(m) = modality {
            if index > ENTROPY_TOLERANCE {
                groups.entry(m).or_default().push(index);
            }
        }
    }
    let quartiles: BTreeMap<u8, (f64, f64)> = groups
        .into_iter()
        .map(|(m, v)| {
            let s = sorted(&v);
            (m, (quantile(&s, 0.25), quantile(&s, 0.75)))
        })
        .collect();
    entries
        .iter()
        .map(|&(modality, index)| match modality {
            Some(m) if index > ENTROPY_TOLERANCE => {
                let (q1, q3) = quartiles[&m];
                if index < q1 {
                    "Low"
                } else if index > q3 {
                    "High"
                } else {
                    "Medium"
                }
            }
            _ => "Non-seasonal",
        })
        .collect()
}
