//! Scoring of estimates against ground truth at the telemetry rate.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{mm_to_pixels, GroundTruthSample, JitterEstimate, SensorGeometry};

/// Summed estimates over one ground-truth interval `(t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalAggregate {
    pub gt_index: usize,
    pub t_start: i64,
    pub t_end: i64,
    pub dx_sum: f64,
    pub dy_sum: f64,
    pub n_estimates: usize,
}

/// Sums estimates into the intervals between consecutive `gt_times`,
/// assigning each estimate by its batch end time. Estimates outside
/// `(gt_times[0], gt_times[last]]` are not assigned.
pub fn aggregate_estimates(estimates: &[JitterEstimate], gt_times: &[i64]) -> Result<Vec<IntervalAggregate>> {
    if gt_times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract("ground-truth times must be strictly increasing".into()));
    }
    let mut out: Vec<IntervalAggregate> = gt_times
        .windows(2)
        .enumerate()
        .map(|(i, w)| IntervalAggregate { gt_index: i, t_start: w[0], t_end: w[1], dx_sum: 0.0, dy_sum: 0.0, n_estimates: 0 })
        .collect();
    for e in estimates {
        let t = e.t_end as i64;
        // First boundary at or after t closes the interval containing it.
        let k = gt_times.partition_point(|&g| g < t);
        if k == 0 || k == gt_times.len() {
            continue;
        }
        let agg = &mut out[k - 1];
        agg.dx_sum += e.dx as f64;
        agg.dy_sum += e.dy as f64;
        agg.n_estimates += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub rmse_axis1: f64,
    pub rmse_axis2: f64,
    pub rmse_combined: f64,
    pub n_intervals: usize,
    pub band: Option<String>,
    pub axes: Option<String>,
}

impl ErrorReport {
    pub fn labeled(mut self, band: impl Into<String>, axes: impl Into<String>) -> Self {
        self.band = Some(band.into());
        self.axes = Some(axes.into());
        self
    }
}

/// True pixel displacement of each interval: `truth[i + 1] - truth[i]`
/// converted to pixels. `truth` must hold the samples at the aggregate
/// boundaries.
pub fn interval_truth(
    aggregates: &[IntervalAggregate],
    truth: &[GroundTruthSample],
    geom: &SensorGeometry,
) -> Vec<Option<(f64, f64)>> {
    aggregates
        .iter()
        .map(|a| {
            let (s, e) = (truth.get(a.gt_index)?, truth.get(a.gt_index + 1)?);
            (s.t == a.t_start && e.t == a.t_end)
                .then(|| (mm_to_pixels(e.x_mm - s.x_mm, geom), mm_to_pixels(e.y_mm - s.y_mm, geom)))
        })
        .collect()
}

/// Per-axis and combined RMSE over the intervals that have truth.
/// The combined value is `sqrt(mean |e|^2)` over error vectors.
pub fn compute_errors(
    aggregates: &[IntervalAggregate],
    truth: &[GroundTruthSample],
    geom: &SensorGeometry,
) -> Result<ErrorReport> {
    let (mut s1, mut s2, mut n) = (0.0, 0.0, 0usize);
    for (a, t) in aggregates.iter().zip(interval_truth(aggregates, truth, geom)) {
        if let Some((tx, ty)) = t {
            s1 += (a.dx_sum - tx).powi(2);
            s2 += (a.dy_sum - ty).powi(2);
            n += 1;
        }
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} overlapping ground-truth intervals, need at least 2")));
    }
    let nf = n as f64;
    Ok(ErrorReport {
        rmse_axis1: (s1 / nf).sqrt(),
        rmse_axis2: (s2 / nf).sqrt(),
        rmse_combined: ((s1 + s2) / nf).sqrt(),
        n_intervals: n,
        band: None,
        axes: None,
    })
}

/// Count grid over integer displacements `[-radius, radius]^2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Heatmap {
    pub radius: i32,
    /// Row-major, rows indexed by `dy`, columns by `dx`.
    pub counts: Vec<u64>,
}

impl Heatmap {
    pub fn new(radius: i32) -> Self {
        let side = (2 * radius + 1) as usize;
        Self { radius, counts: vec![0; side * side] }
    }

    pub fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    fn index(&self, dx: i32, dy: i32) -> Option<usize> {
        let r = self.radius;
        ((-r..=r).contains(&dx) && (-r..=r).contains(&dy))
            .then(|| (dy + r) as usize * self.side() + (dx + r) as usize)
    }

    pub fn get(&self, dx: i32, dy: i32) -> u64 {
        self.index(dx, dy).map_or(0, |i| self.counts[i])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bins with a nonzero count, as `(dx, dy, count)`.
    pub fn nonzero(&self) -> impl Iterator<Item = (i32, i32, u64)> + '_ {
        let (r, side) = (self.radius, self.side());
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(move |(i, c)| ((i % side) as i32 - r, (i / side) as i32 - r, *c))
    }

    /// Fraction of the mass at `dx^2 + dy^2 <= radius^2`.
    pub fn mass_within_disc(&self, radius: f64) -> f64 {
        let total = self.total();
        if total == 0 {
            return 1.0;
        }
        let inside: u64 = self
            .nonzero()
            .filter(|(x, y, _)| ((x * x + y * y) as f64) <= radius * radius)
            .map(|(_, _, c)| c)
            .sum();
        inside as f64 / total as f64
    }

    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        let r = self.radius;
        let mut line = String::from("dy\\dx");
        for dx in -r..=r {
            write!(line, ",{dx}").unwrap();
        }
        writeln!(sink, "{line}")?;
        for dy in -r..=r {
            line.clear();
            write!(line, "{dy}").unwrap();
            for dx in -r..=r {
                write!(line, ",{}", self.get(dx, dy)).unwrap();
            }
            writeln!(sink, "{line}")?;
        }
        Ok(())
    }
}

/// Heatmap of per-batch estimates. The grid covers at least `radius` and
/// grows to hold every estimate, so the total always equals the input
/// length.
pub fn estimate_heatmap(estimates: &[JitterEstimate], radius: i32) -> Heatmap {
    let reach = estimates.iter().map(|e| e.dx.abs().max(e.dy.abs())).max().unwrap_or(0);
    let mut h = Heatmap::new(radius.max(reach));
    for e in estimates {
        let i = h.index(e.dx, e.dy).expect("grid covers all estimates");
        h.counts[i] += 1;
    }
    h
}

fn column_label(r: &ErrorReport) -> String {
    format!("{}/{}", r.axes.as_deref().unwrap_or("-"), r.band.as_deref().unwrap_or("-"))
}

const METRICS: [&str; 3] = ["Error Axis1", "Error Axis2", "Error combined"];

fn metric(r: &ErrorReport, k: usize) -> f64 {
    [r.rmse_axis1, r.rmse_axis2, r.rmse_combined][k]
}

/// Machine-readable results table: one row per metric, one column per
/// report labeled `axes/band`.
pub fn write_results_csv<W: Write>(reports: &[ErrorReport], mut sink: W) -> Result<()> {
    let mut header = String::from("metric");
    for r in reports {
        write!(header, ",{}", column_label(r)).unwrap();
    }
    writeln!(sink, "{header}")?;
    for (k, name) in METRICS.iter().enumerate() {
        let mut line = name.to_string();
        for r in reports {
            write!(line, ",{:.4}", metric(r, k)).unwrap();
        }
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

/// Aligned plain-text version of the results table.
pub fn format_results_table(reports: &[ErrorReport]) -> String {
    let labels: Vec<String> = reports.iter().map(column_label).collect();
    let w = labels.iter().map(String::len).max().unwrap_or(0).max(8);
    let mut s = format!("{:<16}", "");
    for l in &labels {
        write!(s, " {l:>w$}").unwrap();
    }
    s.push('\n');
    for (k, name) in METRICS.iter().enumerate() {
        write!(s, "{name:<16}").unwrap();
        for r in reports {
            write!(s, " {:>w$.2}", metric(r, k)).unwrap();
        }
        s.push('\n');
    }
    s
}
