//! Facility counts and covariate grids: parsing, reduction to monthly
//! proportion curves, preprocessing, and design matrix construction.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::curve::{ProportionCurve, PROPORTION_OFFSET};
use crate::error::{Error, Result};
use crate::stmodel::Observation;

/// Default threshold below which log-proportions are discarded as outliers.
pub const LOG_OUTLIER_THRESHOLD: f64 = -11.0;

/// One row of the facility CSV: a monthly case count at a located facility.
#[derive(Debug, Clone, PartialEq)]
pub struct FacilityRecord {
    pub facility_id: String,
    pub lon: f64,
    pub lat: f64,
    pub year: i32,
    pub month: u32,
    /// Missing cells are absent observations, not zeros.
    pub cases: Option<u64>,
}

/// A facility reduced to per-month medians over years and the implied
/// proportion curve.
#[derive(Debug, Clone)]
pub struct FacilitySeries {
    pub facility_id: String,
    pub location: (f64, f64),
    pub median_counts: [f64; 12],
    pub proportions: ProportionCurve,
    /// True when every monthly median was zero, so the curve fell back to
    /// the uniform distribution.
    pub zero_case: bool,
}

/// Result of [`reduce_to_series`]: retained series plus per-facility drop
/// reasons for the drop report.
#[derive(Debug, Clone, Default)]
pub struct ReduceOutcome {
    pub series: Vec<FacilitySeries>,
    pub dropped: Vec<(String, String)>,
}

const FACILITY_HEADER: [&str; 6] = ["facility_id", "lon", "lat", "year", "month", "cases"];

/// Parses the facility CSV (`facility_id,lon,lat,year,month,cases`).
pub fn load_facilities(path: &Path) -> Result<Vec<FacilityRecord>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_facilities_from(file, &path.display().to_string())
}

pub fn load_facilities_from<R: Read>(reader: R, path: &str) -> Result<Vec<FacilityRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers().map_err(|e| Error::Parse {
            path: path.into(),
            line: 1,
            message: e.to_string(),
        })?;
        let got: Vec<&str> = headers.iter().map(str::trim).collect();
        if got != FACILITY_HEADER {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: format!("unexpected header {got:?}, expected {FACILITY_HEADER:?}"),
            });
        }
    }

    let mut records = Vec::new();
    let mut seen: BTreeSet<(String, i32, u32)> = BTreeSet::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let row = row.map_err(|e| Error::Parse {
            path: path.into(),
            line,
            message: e.to_string(),
        })?;
        if row.len() != 6 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("expected 6 fields, found {}", row.len()),
            });
        }
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let parse_f64 = |i: usize, name: &str| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("invalid {name} value {:?}", field(i)),
            })
        };
        let facility_id = field(0).to_string();
        if facility_id.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: "empty facility_id".into(),
            });
        }
        let lon = parse_f64(1, "lon")?;
        let lat = parse_f64(2, "lat")?;
        let year: i32 = field(3).parse().map_err(|_| Error::Parse {
            path: path.into(),
            line,
            message: format!("invalid year value {:?}", field(3)),
        })?;
        let month: u32 = field(4).parse().map_err(|_| Error::Parse {
            path: path.into(),
            line,
            message: format!("invalid month value {:?}", field(4)),
        })?;
        if !(1..=12).contains(&month) {
            return Err(Error::Validation(format!(
                "{path}:{line}: month {month} out of range 1..12"
            )));
        }
        let cases = if field(5).is_empty() {
            None
        } else {
            Some(field(5).parse::<u64>().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("invalid cases value {:?}", field(5)),
            })?)
        };
        if !seen.insert((facility_id.clone(), year, month)) {
            return Err(Error::Validation(format!(
                "{path}:{line}: duplicate record for ({facility_id}, {year}, {month})"
            )));
        }
        records.push(FacilityRecord {
            facility_id,
            lon,
            lat,
            year,
            month,
            cases,
        });
    }
    Ok(records)
}

/// Reduces records to per-facility series: the median count per month over
/// the years where that month was observed, divided by the 12-month sum.
///
/// A facility missing any calendar month across all years is dropped and
/// reported. An all-zero facility gets the uniform curve with `zero_case`
/// set. Output order is sorted by facility id, independent of input order.
pub fn reduce_to_series(records: &[FacilityRecord]) -> ReduceOutcome {
    let mut by_facility: BTreeMap<&str, Vec<&FacilityRecord>> = BTreeMap::new();
    for r in records {
        by_facility.entry(&r.facility_id).or_default().push(r);
    }

    let mut outcome = ReduceOutcome::default();
    'facility: for (id, recs) in by_facility {
        let location = (recs[0].lon, recs[0].lat);
        let mut medians = [0.0f64; 12];
        for month in 1..=12u32 {
            let mut counts: Vec<u64> = recs
                .iter()
                .filter(|r| r.month == month)
                .filter_map(|r| r.cases)
                .collect();
            if counts.is_empty() {
                outcome
                    .dropped
                    .push((id.to_string(), format!("missing month {month}")));
                continue 'facility;
            }
            counts.sort_unstable();
            medians[month as usize - 1] = median_of_sorted(&counts);
        }
        let sum: f64 = medians.iter().sum();
        let proportions =
            ProportionCurve::from_weights(&medians).expect("medians are finite and nonnegative");
        outcome.series.push(FacilitySeries {
            facility_id: id.to_string(),
            location,
            median_counts: medians,
            proportions,
            zero_case: sum <= 0.0,
        });
    }
    outcome
}

fn median_of_sorted(sorted: &[u64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

/// Adds the standard offset to a proportion curve and renormalizes, making
/// every entry strictly positive before logs are taken.
pub fn apply_offset_and_rescale(curve: &ProportionCurve) -> ProportionCurve {
    curve.offset_rescaled(PROPORTION_OFFSET)
}

/// Drops observations with log-proportion at or below `threshold`.
/// Returns the retained observations and the removal count.
pub fn filter_outliers(
    observations: Vec<Observation>,
    threshold: f64,
) -> (Vec<Observation>, usize) {
    let before = observations.len();
    let kept: Vec<Observation> = observations.into_iter().filter(|o| o.y > threshold).collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Standardization statistics stored with a covariate stack so prediction
/// points reuse the training-domain scaling.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Standardization {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Named monthly covariate grids on a shared spatial index, standardized to
/// mean 0 / sd 1 over all (cell, month) entries.
#[derive(Debug, Clone)]
pub struct CovariateStack {
    names: Vec<String>,
    cells: Vec<(f64, f64)>,
    /// values[covariate][month - 1][cell], standardized.
    values: Vec<Vec<Vec<f64>>>,
    stats: Vec<Standardization>,
    lags: BTreeMap<String, BTreeSet<u32>>,
    bbox: (f64, f64, f64, f64), // lon min/max, lat min/max
}

const COVARIATE_HEADER: [&str; 5] = ["covariate", "month", "lon", "lat", "value"];

impl CovariateStack {
    /// Loads a long-format covariate CSV (`covariate,month,lon,lat,value`)
    /// and standardizes each covariate in place.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::load_from(file, &path.display().to_string())
    }

    pub fn load_from<R: Read>(reader: R, path: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        {
            let headers = rdr.headers().map_err(|e| Error::Parse {
                path: path.into(),
                line: 1,
                message: e.to_string(),
            })?;
            let got: Vec<&str> = headers.iter().map(str::trim).collect();
            if got != COVARIATE_HEADER {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 1,
                    message: format!("unexpected header {got:?}, expected {COVARIATE_HEADER:?}"),
                });
            }
        }

        // raw[name][(month, cell)] = value
        let mut raw: BTreeMap<String, BTreeMap<(u32, (u64, u64)), f64>> = BTreeMap::new();
        let mut cell_set: BTreeSet<(u64, u64)> = BTreeSet::new();
        for (idx, row) in rdr.records().enumerate() {
            let line = idx + 2;
            let row = row.map_err(|e| Error::Parse {
                path: path.into(),
                line,
                message: e.to_string(),
            })?;
            let field = |i: usize| row.get(i).unwrap_or("").trim().to_string();
            let name = field(0);
            let month: u32 = field(1).parse().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("invalid month {:?}", field(1)),
            })?;
            if !(1..=12).contains(&month) {
                return Err(Error::Validation(format!(
                    "{path}:{line}: month {month} out of range 1..12"
                )));
            }
            let lon: f64 = field(2).parse().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("invalid lon {:?}", field(2)),
            })?;
            let lat: f64 = field(3).parse().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("invalid lat {:?}", field(3)),
            })?;
            let value: f64 = field(4).parse().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("invalid value {:?}", field(4)),
            })?;
            let key = (lon.to_bits(), lat.to_bits());
            cell_set.insert(key);
            raw.entry(name).or_default().insert((month, key), value);
        }
        if raw.is_empty() {
            return Err(Error::Validation(format!("{path}: no covariate rows")));
        }

        let cells: Vec<(f64, f64)> = cell_set
            .iter()
            .map(|&(lon, lat)| (f64::from_bits(lon), f64::from_bits(lat)))
            .collect();
        let cell_index: BTreeMap<(u64, u64), usize> = cell_set
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, i))
            .collect();

        let mut names = Vec::new();
        let mut values = Vec::new();
        let mut stats = Vec::new();
        for (name, entries) in &raw {
            let mut grid = vec![vec![0.0f64; cells.len()]; 12];
            for month in 1..=12u32 {
                for (key, &cell) in &cell_index {
                    match entries.get(&(month, *key)) {
                        Some(&v) => grid[month as usize - 1][cell] = v,
                        None => {
                            return Err(Error::Validation(format!(
                                "covariate {name} missing month {month} at cell \
                                 ({}, {})",
                                f64::from_bits(key.0),
                                f64::from_bits(key.1)
                            )))
                        }
                    }
                }
            }
            let all: Vec<f64> = grid.iter().flatten().copied().collect();
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            let var =
                all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (all.len() as f64 - 1.0);
            let sd = var.sqrt();
            let scale = if sd > 0.0 { sd } else { 1.0 };
            for month in grid.iter_mut() {
                for v in month.iter_mut() {
                    *v = (*v - mean) / scale;
                }
            }
            names.push(name.clone());
            values.push(grid);
            stats.push(Standardization {
                name: name.clone(),
                mean,
                sd: scale,
            });
        }

        let bbox = bounding_box(&cells);
        let mut stack = CovariateStack {
            names,
            cells,
            values,
            stats,
            lags: BTreeMap::new(),
            bbox,
        };
        stack.set_lags_all(&[0]);
        Ok(stack)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn stats(&self) -> &[Standardization] {
        &self.stats
    }

    pub fn cells(&self) -> &[(f64, f64)] {
        &self.cells
    }

    /// Registers the same lag offsets for every covariate.
    pub fn set_lags_all(&mut self, lags: &[u32]) {
        let set: BTreeSet<u32> = lags.iter().copied().collect();
        self.lags = self
            .names
            .iter()
            .map(|n| (n.clone(), set.clone()))
            .collect();
    }

    /// All covariate-with-lag column names, e.g. `rain`, `rain_lag2`.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for name in &self.names {
            if let Some(lags) = self.lags.get(name) {
                for &lag in lags {
                    out.push(column_name(name, lag));
                }
            }
        }
        out
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        let (lon_min, lon_max, lat_min, lat_max) = self.bbox;
        lon >= lon_min && lon <= lon_max && lat >= lat_min && lat <= lat_max
    }

    fn nearest_cell(&self, lon: f64, lat: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &(clon, clat)) in self.cells.iter().enumerate() {
            let d = (clon - lon).powi(2) + (clat - lat).powi(2);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Standardized value of a covariate column at a 1-based month and a
    /// location, applying the cyclic lag wrap and nearest-cell lookup.
    pub fn value_at(&self, column: &str, month: usize, lon: f64, lat: f64) -> Result<f64> {
        let (base, lag) = split_column_name(column);
        let cov = self
            .names
            .iter()
            .position(|n| n == base)
            .ok_or_else(|| Error::Validation(format!("unknown covariate {column:?}")))?;
        if !self.contains(lon, lat) {
            return Err(Error::Validation(format!(
                "location ({lon}, {lat}) outside covariate grid bounding box"
            )));
        }
        let lagged = lagged_month(month, lag);
        let cell = self.nearest_cell(lon, lat);
        Ok(self.values[cov][lagged - 1][cell])
    }
}

/// Cyclic lag wrap: the design month for observation month `month` (1-based)
/// and lag `lag` is ((month - 1 - lag) mod 12) + 1.
pub fn lagged_month(month: usize, lag: u32) -> usize {
    debug_assert!((1..=12).contains(&month));
    ((month as i64 - 1 - lag as i64).rem_euclid(12)) as usize + 1
}

pub fn column_name(base: &str, lag: u32) -> String {
    if lag == 0 {
        base.to_string()
    } else {
        format!("{base}_lag{lag}")
    }
}

pub fn split_column_name(column: &str) -> (&str, u32) {
    if let Some(pos) = column.rfind("_lag") {
        if let Ok(lag) = column[pos + 4..].parse::<u32>() {
            return (&column[..pos], lag);
        }
    }
    (column, 0)
}

fn bounding_box(cells: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(lon, lat) in cells {
        b.0 = b.0.min(lon);
        b.1 = b.1.max(lon);
        b.2 = b.2.min(lat);
        b.3 = b.3.max(lat);
    }
    b
}

/// Builds the design matrix with rows in month-major order over
/// (month 1..12) x (locations), columns: intercept then `selected` columns.
pub fn build_design(
    stack: &CovariateStack,
    locations: &[(f64, f64)],
    selected: &[String],
) -> Result<Array2<f64>> {
    let n = locations.len();
    let mut design = Array2::zeros((12 * n, selected.len() + 1));
    for month in 1..=12usize {
        for (j, &(lon, lat)) in locations.iter().enumerate() {
            let row = (month - 1) * n + j;
            design[[row, 0]] = 1.0;
            for (c, col) in selected.iter().enumerate() {
                design[[row, c + 1]] = stack.value_at(col, month, lon, lat)?;
            }
        }
    }
    Ok(design)
}
