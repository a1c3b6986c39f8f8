//! Static SVG rendering: choropleth-style scatter maps of feature columns
//! and per-location monthly curve plots with a median line and 95% band.
//! Output bytes are a pure function of the input, so renders diff cleanly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Canvas geometry shared by all renderers.
#[derive(Debug, Clone)]
pub struct RenderStyle {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub marker_radius: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle { width: 640.0, height: 480.0, margin: 50.0, marker_radius: 5.0 }
    }
}

/// Fixed-precision number formatting keeps the SVG byte-deterministic.
fn fmt(x: f64) -> String {
    format!("{x:.2}")
}

/// Blue -> yellow -> red ramp over t in [0, 1].
fn ramp_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let u = t * 2.0;
        (40.0 + 215.0 * u, 60.0 + 160.0 * u, 150.0 - 90.0 * u)
    } else {
        let u = (t - 0.5) * 2.0;
        (255.0 - 45.0 * u, 220.0 - 180.0 * u, 60.0 - 20.0 * u)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

fn parse_table(csv_text: &str, what: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Validation(format!("{what}: bad header: {e}")))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::Validation(format!("{what}: row {}: {e}", i + 2)))?;
        rows.push(record.iter().map(|f| f.to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::Validation(format!("{what}: no data rows")));
    }
    Ok((headers, rows))
}

fn column_index(headers: &[String], name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        Error::Validation(format!(
            "unknown column {name:?}; available columns: {}",
            headers.join(", ")
        ))
    })
}

fn parse_f64(field: &str, column: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Validation(format!("column {column}: not a number: {field:?}")))
}

/// One marker per CSV row at (lon, lat), colored by `column`. Numeric
/// columns get a continuous ramp; non-numeric columns get discrete colors.
/// Both variants draw a legend.
pub fn render_feature_map(csv_text: &str, column: &str, style: &RenderStyle) -> Result<String> {
    let (headers, rows) = parse_table(csv_text, "feature CSV")?;
    let lon_i = column_index(&headers, "lon")?;
    let lat_i = column_index(&headers, "lat")?;
    let col_i = column_index(&headers, column)?;

    let lons: Vec<f64> = rows
        .iter()
        .map(|r| parse_f64(&r[lon_i], "lon"))
        .collect::<Result<_>>()?;
    let lats: Vec<f64> = rows
        .iter()
        .map(|r| parse_f64(&r[lat_i], "lat"))
        .collect::<Result<_>>()?;
    let raw: Vec<&str> = rows.iter().map(|r| r[col_i].as_str()).collect();
    let numeric: Option<Vec<f64>> = raw.iter().map(|f| f.parse().ok()).collect();

    let (lon_min, lon_max) = span(&lons);
    let (lat_min, lat_max) = span(&lats);
    let m = style.margin;
    let plot_w = style.width - 2.0 * m - 60.0; // room for the legend strip
    let plot_h = style.height - 2.0 * m;
    let sx = |lon: f64| m + (lon - lon_min) / (lon_max - lon_min).max(1e-12) * plot_w;
    let sy = |lat: f64| m + (lat_max - lat) / (lat_max - lat_min).max(1e-12) * plot_h;

    let mut svg = svg_open(style);
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"25\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        fmt(style.width / 2.0),
        escape(column)
    );

    match numeric {
        Some(values) => {
            let (vmin, vmax) = span(&values);
            let norm = |v: f64| (v - vmin) / (vmax - vmin).max(1e-12);
            for i in 0..rows.len() {
                let _ = write!(
                    svg,
                    "<circle class=\"marker\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>",
                    fmt(sx(lons[i])),
                    fmt(sy(lats[i])),
                    fmt(style.marker_radius),
                    ramp_color(norm(values[i]))
                );
            }
            // Vertical ramp legend with min/mid/max labels.
            let lx = style.width - m - 30.0;
            let steps = 24;
            for k in 0..steps {
                let t = k as f64 / (steps - 1) as f64;
                let y = m + plot_h * (1.0 - t) - plot_h / steps as f64;
                let _ = write!(
                    svg,
                    "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"{}\" fill=\"{}\"/>",
                    fmt(lx),
                    fmt(y),
                    fmt(plot_h / steps as f64 + 0.5),
                    ramp_color(t)
                );
            }
            for (t, v) in [(0.0, vmin), (0.5, (vmin + vmax) / 2.0), (1.0, vmax)] {
                let _ = write!(
                    svg,
                    "<text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>",
                    fmt(lx + 18.0),
                    fmt(m + plot_h * (1.0 - t) + 3.0),
                    fmt_value(v)
                );
            }
        }
        None => {
            let mut categories: Vec<&str> = raw.to_vec();
            categories.sort_unstable();
            categories.dedup();
            let color_of: BTreeMap<&str, String> = categories
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    let t = if categories.len() > 1 {
                        k as f64 / (categories.len() - 1) as f64
                    } else {
                        0.5
                    };
                    (c, ramp_color(t))
                })
                .collect();
            for i in 0..rows.len() {
                let _ = write!(
                    svg,
                    "<circle class=\"marker\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>",
                    fmt(sx(lons[i])),
                    fmt(sy(lats[i])),
                    fmt(style.marker_radius),
                    color_of[raw[i]]
                );
            }
            let lx = style.width - m - 30.0;
            for (k, &c) in categories.iter().enumerate() {
                let y = m + 20.0 * k as f64;
                let _ = write!(
                    svg,
                    "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"14\" fill=\"{}\"/>\
                     <text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>",
                    fmt(lx),
                    fmt(y),
                    color_of[c],
                    fmt(lx + 18.0),
                    fmt(y + 11.0),
                    escape(c)
                );
            }
        }
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

/// A 12-month curve plot: shaded 95% band, median polyline, and a dashed
/// reference line at the uniform level 1/12 of the plotted total.
pub fn curve_plot(
    median: &[f64; 12],
    lo: &[f64; 12],
    hi: &[f64; 12],
    title: &str,
    style: &RenderStyle,
) -> String {
    let m = style.margin;
    let plot_w = style.width - 2.0 * m;
    let plot_h = style.height - 2.0 * m;
    let ymax = hi
        .iter()
        .chain(median)
        .cloned()
        .fold(f64::MIN_POSITIVE, f64::max)
        * 1.15;
    let sx = |month: usize| m + (month as f64 - 1.0) / 11.0 * plot_w;
    let sy = |v: f64| m + plot_h * (1.0 - (v / ymax).clamp(0.0, 1.0));

    let mut svg = svg_open(style);
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"25\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        fmt(style.width / 2.0),
        escape(title)
    );

    // Band polygon: upper edge left to right, lower edge back.
    let mut band = String::new();
    for month in 1..=12 {
        let _ = write!(band, "{},{} ", fmt(sx(month)), fmt(sy(hi[month - 1])));
    }
    for month in (1..=12).rev() {
        let _ = write!(band, "{},{} ", fmt(sx(month)), fmt(sy(lo[month - 1])));
    }
    let _ = write!(
        svg,
        "<polygon class=\"band\" points=\"{}\" fill=\"#9ecae1\" fill-opacity=\"0.5\"/>",
        band.trim_end()
    );

    let uniform = median.iter().sum::<f64>() / 12.0;
    let _ = write!(
        svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>",
        fmt(sx(1)),
        fmt(sy(uniform)),
        fmt(sx(12)),
        fmt(sy(uniform))
    );

    let mut line = String::new();
    for month in 1..=12 {
        let _ = write!(line, "{},{} ", fmt(sx(month)), fmt(sy(median[month - 1])));
    }
    let _ = write!(
        svg,
        "<polyline class=\"median\" points=\"{}\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\"/>",
        line.trim_end()
    );

    // Axes and month ticks.
    let _ = write!(
        svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000000\"/>\
         <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000000\"/>",
        fmt(m),
        fmt(m + plot_h),
        fmt(m + plot_w),
        fmt(m + plot_h),
        fmt(m),
        fmt(m),
        fmt(m),
        fmt(m + plot_h)
    );
    for month in 1..=12 {
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{month}</text>",
            fmt(sx(month)),
            fmt(m + plot_h + 15.0)
        );
    }
    for frac in [0.0, 0.5, 1.0] {
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            fmt(m - 5.0),
            fmt(m + plot_h * (1.0 - frac) + 3.0),
            fmt_value(ymax * frac)
        );
    }

    svg.push_str("</svg>\n");
    svg
}

/// One curve plot per location from a long-format monthly CSV with columns
/// `lon,lat,month` and median/lo/hi value columns. Returns
/// (location key, SVG) pairs ordered by location.
pub fn render_curve_plots(
    csv_text: &str,
    value_prefix: &str,
    style: &RenderStyle,
) -> Result<Vec<(String, String)>> {
    let (headers, rows) = parse_table(csv_text, "curve CSV")?;
    let lon_i = column_index(&headers, "lon")?;
    let lat_i = column_index(&headers, "lat")?;
    let month_i = column_index(&headers, "month")?;
    let med_i = column_index(&headers, &format!("{value_prefix}_median"))?;
    let lo_i = column_index(&headers, &format!("{value_prefix}_lo95"))?;
    let hi_i = column_index(&headers, &format!("{value_prefix}_hi95"))?;

    // Key by the lon/lat text so grouping never depends on float parsing.
    let mut groups: BTreeMap<(String, String), [(f64, f64, f64); 12]> = BTreeMap::new();
    let mut seen: BTreeMap<(String, String), [bool; 12]> = BTreeMap::new();
    for r in &rows {
        let key = (r[lon_i].clone(), r[lat_i].clone());
        let month: usize = r[month_i]
            .parse()
            .ok()
            .filter(|m| (1..=12).contains(m))
            .ok_or_else(|| {
                Error::Validation(format!("month must be 1..=12, got {:?}", r[month_i]))
            })?;
        let med = parse_f64(&r[med_i], "median")?;
        let lo = parse_f64(&r[lo_i], "lo95")?;
        let hi = parse_f64(&r[hi_i], "hi95")?;
        groups.entry(key.clone()).or_insert([(0.0, 0.0, 0.0); 12])[month - 1] = (med, lo, hi);
        seen.entry(key).or_insert([false; 12])[month - 1] = true;
    }

    let mut out = Vec::with_capacity(groups.len());
    for (key, values) in &groups {
        if seen[key].iter().any(|s| !s) {
            return Err(Error::Validation(format!(
                "location ({}, {}) is missing months",
                key.0, key.1
            )));
        }
        let mut median = [0.0; 12];
        let mut lo = [0.0; 12];
        let mut hi = [0.0; 12];
        for (i, &(m, l, h)) in values.iter().enumerate() {
            median[i] = m;
            lo[i] = l;
            hi[i] = h;
        }
        let title = format!("({}, {})", key.0, key.1);
        out.push((
            format!("{}_{}", key.0, key.1),
            curve_plot(&median, &lo, &hi, &title, style),
        ));
    }
    Ok(out)
}

fn svg_open(style: &RenderStyle) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         viewBox=\"0 0 {} {}\">\
         <rect width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>",
        fmt(style.width),
        fmt(style.height),
        fmt(style.width),
        fmt(style.height),
        fmt(style.width),
        fmt(style.height)
    )
}

fn span(values: &[f64]) -> (f64, f64) {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn fmt_value(v: f64) -> String {
    if v != 0.0 && (v.abs() < 0.01 || v.abs() >= 10000.0) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
