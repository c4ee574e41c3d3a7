//! Aggregation of per-receiver search results into the tables behind the
//! evaluation figures: binned mean gains, CDFs, overhead curves, height
//! sweeps and obstacle-position heatmaps.

use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::search::overhead_curve;
use crate::{Error, Result};

/// Width of ratio and distance bins.
pub const BIN_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    BlockageBins,
    HorizontalBins,
    VerticalBins,
    Cdf,
    HeightSweep,
    OverheadCurve,
    PositionHeatmap,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::BlockageBins,
        Metric::HorizontalBins,
        Metric::VerticalBins,
        Metric::Cdf,
        Metric::HeightSweep,
        Metric::OverheadCurve,
        Metric::PositionHeatmap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::BlockageBins => "blockage-bins",
            Metric::HorizontalBins => "horizontal-bins",
            Metric::VerticalBins => "vertical-bins",
            Metric::Cdf => "cdf",
            Metric::HeightSweep => "height-sweep",
            Metric::OverheadCurve => "overhead-curve",
            Metric::PositionHeatmap => "position-heatmap",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// One evaluated receiver for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub x: f64,
    pub y: f64,
    pub gain: f64,
    #[serde(default)]
    pub blockage: Option<f64>,
    #[serde(default)]
    pub height: Option<f64>,
    /// Obstacle center the row was simulated with.
    #[serde(default)]
    pub cx: Option<f64>,
    #[serde(default)]
    pub cy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricBin {
    pub lower: f64,
    pub upper: f64,
    pub method: String,
    pub count: usize,
    /// Mean gain; `NaN` for empty bins.
    pub mean_gain: f64,
}

/// Bins `(key, method, gain)` samples over `[lo, hi]` with width `width`.
/// Bin `k` covers `(lo + (k−1)w, lo + kw]` and is labeled by its right
/// edge; the first bin also takes `lo` itself. Every method gets every bin,
/// empty ones with count 0.
pub fn bin_samples(samples: &[(f64, &str, f64)], lo: f64, hi: f64, width: f64) -> Result<Vec<MetricBin>> {
    if !(width > 0.0) || !(hi > lo) {
        return Err(Error::Parameter(format!("bad binning domain [{lo}, {hi}] width {width}")));
    }
    let count = ((hi - lo) / width - 1e-9).ceil().max(1.0) as usize;
    let methods: Vec<&str> = {
        let mut m: Vec<&str> = samples.iter().map(|s| s.1).collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    let mut sums: BTreeMap<(&str, usize), (usize, f64)> = BTreeMap::new();
    for &(key, method, gain) in samples {
        if key < lo - 1e-12 || key > hi + 1e-12 {
            return Err(Error::Parameter(format!("value {key} outside [{lo}, {hi}]")));
        }
        let k = (((key - lo) / width - 1e-9).ceil().max(1.0) as usize).min(count);
        let e = sums.entry((method, k)).or_insert((0, 0.0));
        // running mean, exact for identical gains
        e.0 += 1;
        e.1 += (gain - e.1) / e.0 as f64;
    }
    let mut bins = Vec::with_capacity(methods.len() * count);
    for m in methods {
        for k in 1..=count {
            let (n, mean) = sums.get(&(m, k)).copied().unwrap_or((0, f64::NAN));
            bins.push(MetricBin {
                lower: lo + (k - 1) as f64 * width,
                upper: lo + k as f64 * width,
                method: m.to_string(),
                count: n,
                mean_gain: mean,
            });
        }
    }
    Ok(bins)
}

/// Bin domain covering `values` on the `width` lattice.
pub fn lattice_domain(values: impl Iterator<Item = f64>, width: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, width);
    }
    let lo = (lo / width + 1e-9).floor() * width;
    let hi = ((hi / width - 1e-9).ceil() * width).max(lo + width);
    (lo, hi)
}

/// Empirical CDF points `(gain, P(G ≤ gain))` in increasing gain order.
pub fn cdf(gains: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = gains.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (k, g) in sorted.into_iter().enumerate() {
        let p = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == g => last.1 = p,
            _ => out.push((g, p)),
        }
    }
    out
}

/// Mean over receivers of the best gain found within the first `n`
/// measurements. All traces must follow the same sweep order and length.
pub fn mean_overhead_curve(traces: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = traces.first() else {
        return Err(Error::Parameter("no traces".into()));
    };
    if traces.iter().any(|t| t.len() != first.len()) {
        return Err(Error::Parameter("traces differ in length".into()));
    }
    let mut acc = vec![0.0; first.len()];
    for t in traces {
        for (a, b) in acc.iter_mut().zip(overhead_curve(t)) {
            *a += b;
        }
    }
    Ok(acc.into_iter().map(|v| v / traces.len() as f64).collect())
}

/// Order-preserving integer image of a float, for use as a map key.
fn ord_key(key: f64) -> u64 {
    let bits = key.to_bits();
    if key.is_sign_negative() {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// Mean gain per `(method, key)` for discrete keys such as obstacle heights.
pub fn group_means(samples: &[(f64, &str, f64)]) -> Vec<MetricBin> {
    let mut sums: BTreeMap<(&str, u64), (f64, usize, f64)> = BTreeMap::new();
    for &(key, method, gain) in samples {
        let e = sums.entry((method, ord_key(key))).or_insert((key, 0, 0.0));
        e.1 += 1;
        e.2 += (gain - e.2) / e.1 as f64;
    }
    sums.into_iter()
        .map(|((method, _), (key, n, mean))| MetricBin {
            lower: key,
            upper: key,
            method: method.to_string(),
            count: n,
            mean_gain: mean,
        })
        .collect()
}

/// Rows of a metric table, ready for CSV.
pub fn evaluate(metric: Metric, rows: &[EvalRow], obstacle_center: Option<(f64, f64)>) -> Result<Vec<MetricBin>> {
    if rows.is_empty() {
        return Err(Error::Config(format!("metric {} needs result rows", metric.name())));
    }
    let (ox, oy) = obstacle_center.unwrap_or((0.0, 0.0));
    let keyed = |key: &dyn Fn(&EvalRow) -> Result<f64>| -> Result<Vec<(f64, &str, f64)>> {
        rows.iter().map(|r| Ok((key(r)?, r.method.as_str(), r.gain))).collect()
    };
    match metric {
        Metric::BlockageBins => {
            let s = keyed(&|r| r.blockage.ok_or_else(|| Error::Config("row lacks a blockage ratio".into())))?;
            bin_samples(&s, 0.0, 1.0, BIN_WIDTH)
        }
        Metric::HorizontalBins | Metric::VerticalBins => {
            let s = if metric == Metric::HorizontalBins { keyed(&|r| Ok(r.x - ox))? } else { keyed(&|r| Ok(r.y - oy))? };
            let (lo, hi) = lattice_domain(s.iter().map(|v| v.0), BIN_WIDTH);
            bin_samples(&s, lo, hi, BIN_WIDTH)
        }
        Metric::HeightSweep => {
            let s = keyed(&|r| r.height.ok_or_else(|| Error::Config("row lacks an obstacle height".into())))?;
            Ok(group_means(&s))
        }
        Metric::Cdf | Metric::OverheadCurve | Metric::PositionHeatmap => {
            Err(Error::Config(format!("metric {} is not a binned table", metric.name())))
        }
    }
}

pub fn write_bins_csv<W: Write>(writer: W, bins: &[MetricBin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for b in bins {
        w.serialize(b).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// CDF per method: columns `method, gain, probability`.
pub fn write_cdf_csv<W: Write>(writer: W, rows: &[EvalRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("cdf needs result rows".into()));
    }
    let mut by_method: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_method.entry(&r.method).or_default().push(r.gain);
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "gain", "probability"]).map_err(|e| Error::Io(e.into()))?;
    for (m, gains) in by_method {
        for (g, p) in cdf(&gains) {
            w.write_record([m.to_string(), g.to_string(), p.to_string()]).map_err(|e| Error::Io(e.into()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Overhead curves: columns `method, n, mean_best_gain`.
pub fn write_curve_csv<W: Write>(writer: W, curves: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "n", "mean_best_gain"]).map_err(|e| Error::Io(e.into()))?;
    for (m, curve) in curves {
        for (k, v) in curve.iter().enumerate() {
            w.write_record([m.clone(), (k + 1).to_string(), v.to_string()]).map_err(|e| Error::Io(e.into()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean gain per `(obstacle center, method)`, ordered by center then method.
pub fn heatmap_cells(rows: &[EvalRow]) -> Result<Vec<((f64, f64), String, f64)>> {
    if rows.is_empty() {
        return Err(Error::Config("position-heatmap needs result rows".into()));
    }
    let mut acc: BTreeMap<(u64, u64, &str), (usize, f64, f64, f64)> = BTreeMap::new();
    for r in rows {
        let (Some(cx), Some(cy)) = (r.cx, r.cy) else {
            return Err(Error::Config("row lacks an obstacle center".into()));
        };
        let e = acc.entry((ord_key(cx), ord_key(cy), r.method.as_str())).or_insert((0, cx, cy, 0.0));
        e.0 += 1;
        e.3 += (r.gain - e.3) / e.0 as f64;
    }
    Ok(acc.into_iter().map(|((_, _, m), (_, cx, cy, g))| ((cx, cy), m.to_string(), g)).collect())
}

/// Heatmap cells: columns `cx, cy, method, mean_gain`.
pub fn write_heatmap_csv<W: Write>(writer: W, cells: &[((f64, f64), String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cx", "cy", "method", "mean_gain"]).map_err(|e| Error::Io(e.into()))?;
    for ((cx, cy), m, g) in cells {
        w.write_record([cx.to_string(), cy.to_string(), m.clone(), g.to_string()]).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
