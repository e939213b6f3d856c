use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{mm_to_pixels, Event, GroundTruthSample, Micros, SensorGeometry, JITTER_AMPLITUDE_MM, SYNC_SPIKE_MM};
use crate::recovery::dbscan::{dbscan, Label};

/// Offset between the camera and actuator clocks: `t_piezo = t_cam + offset_us`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClockAlignment {
    pub offset_us: i64,
    pub spike_t_cam: Micros,
    pub spike_t_piezo: i64,
    /// Burst event rate over the trailing background rate.
    pub confidence: f64,
}

impl ClockAlignment {
    pub fn piezo_to_cam(&self, t_piezo: i64) -> i64 {
        t_piezo - self.offset_us
    }
}

/// Spike detector settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignParams {
    pub geometry: SensorGeometry,
    pub bin_us: u64,
    /// A bin opens a burst when its count exceeds this multiple of the trailing median.
    pub rate_factor: f64,
    pub trailing_us: u64,
    pub nominal_mm: f64,
    pub spike_mm: f64,
    /// Accepted burst extent, as a fraction of the expected spike excursion.
    pub extent_low: f64,
    pub extent_high: f64,
    /// Extra pixels allowed on top of the excursion for the star spot itself.
    pub spot_px: f64,
    pub cluster_eps: f64,
    pub cluster_min_pts: usize,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            geometry: SensorGeometry::default(),
            bin_us: 1_000,
            rate_factor: 5.0,
            trailing_us: 1_000_000,
            nominal_mm: JITTER_AMPLITUDE_MM,
            spike_mm: SYNC_SPIKE_MM,
            extent_low: 0.7,
            extent_high: 1.3,
            spot_px: 10.0,
            cluster_eps: 3.0,
            cluster_min_pts: 5,
        }
    }
}

/// Typical per-star extent of one burst: the event-weighted median of the
/// cluster extents, so a few merged trails of neighboring stars and small
/// stray clusters do not decide it.
fn burst_extent(events: &[Event], params: &AlignParams) -> f64 {
    let pts: Vec<(i32, i32)> = events.iter().map(Event::pixel).collect();
    let clustering = dbscan(&pts, params.cluster_eps, params.cluster_min_pts);
    let mut bbox = vec![(i32::MAX, i32::MAX, i32::MIN, i32::MIN, 0usize); clustering.n_clusters as usize];
    for (p, l) in pts.iter().zip(&clustering.labels) {
        if let Label::Cluster(c) = l {
            let b = &mut bbox[*c as usize];
            *b = (b.0.min(p.0), b.1.min(p.1), b.2.max(p.0), b.3.max(p.1), b.4 + 1);
        }
    }
    let mut sized: Vec<(i32, usize)> = bbox.iter().map(|b| ((b.2 - b.0).max(b.3 - b.1), b.4)).collect();
    sized.sort_unstable();
    let total: usize = sized.iter().map(|s| s.1).sum();
    let mut seen = 0;
    for (extent, n) in sized {
        seen += n;
        if 2 * seen >= total {
            return extent as f64;
        }
    }
    0.0
}

fn median(values: &mut [u32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable(mid);
    *m as f64
}

fn camera_spike(events: &[Event], params: &AlignParams) -> Result<(Micros, f64)> {
    let last = events.last().ok_or_else(|| Error::AlignmentNotFound("event stream is empty".into()))?;
    let n_bins = (last.t / params.bin_us + 1) as usize;
    let mut counts = vec![0u32; n_bins];
    // index of the first event of each bin
    let mut first = vec![usize::MAX; n_bins];
    for (i, e) in events.iter().enumerate() {
        let b = (e.t / params.bin_us) as usize;
        counts[b] += 1;
        if first[b] == usize::MAX {
            first[b] = i;
        }
    }
    let expected = mm_to_pixels(params.spike_mm, &params.geometry);
    let lo = params.extent_low * expected;
    let hi = params.extent_high * expected + params.spot_px;
    let trailing = (params.trailing_us / params.bin_us).max(1) as usize;

    let mut scratch = Vec::with_capacity(trailing);
    let mut b = 0;
    while b < n_bins {
        if counts[b] == 0 {
            b += 1;
            continue;
        }
        scratch.clear();
        scratch.extend_from_slice(&counts[b.saturating_sub(trailing)..b]);
        let background = median(&mut scratch).max(1.0);
        let threshold = params.rate_factor * background;
        if (counts[b] as f64) <= threshold {
            b += 1;
            continue;
        }
        let mut end = b;
        while end + 1 < n_bins && counts[end + 1] as f64 > threshold {
            end += 1;
        }
        let start_idx = first[b];
        let stop_idx = events.partition_point(|e| e.t < (end as u64 + 1) * params.bin_us);
        let extent = burst_extent(&events[start_idx..stop_idx], params);
        log::debug!("burst at bin {b}..={end}: extent {extent:.1} px (accept {lo:.1}..{hi:.1})");
        if extent >= lo && extent <= hi {
            let rate = (stop_idx - start_idx) as f64 / (end - b + 1) as f64;
            return Ok((events[start_idx].t, rate / background));
        }
        b = end + 1;
    }
    Err(Error::AlignmentNotFound(format!(
        "no event burst above {}x the trailing rate with a {:.1} px excursion",
        params.rate_factor, expected
    )))
}

/// Start of the spike in telemetry: the sample immediately before the first
/// one displaced by more than twice the nominal amplitude.
fn piezo_spike(telemetry: &[GroundTruthSample], params: &AlignParams) -> Result<i64> {
    let limit = 2.0 * params.nominal_mm;
    let k = telemetry
        .iter()
        .position(|s| s.x_mm.abs().max(s.y_mm.abs()) > limit)
        .ok_or_else(|| Error::AlignmentNotFound(format!("no telemetry sample displaced by more than {limit} mm")))?;
    Ok(telemetry[k.saturating_sub(1)].t)
}

/// Aligns camera and actuator clocks on the synchronization spike.
pub fn align_clocks(events: &[Event], telemetry: &[GroundTruthSample], params: &AlignParams) -> Result<ClockAlignment> {
    let spike_t_piezo = piezo_spike(telemetry, params)?;
    let (spike_t_cam, confidence) = camera_spike(events, params)?;
    Ok(ClockAlignment { offset_us: spike_t_piezo - spike_t_cam as i64, spike_t_cam, spike_t_piezo, confidence })
}
