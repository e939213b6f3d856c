use serde::Serialize;

use crate::error::Result;
use crate::exec::Execution;
use crate::model::{EstimateFlags, Event, FrequencyBand, JitterEstimate, Micros, PeriodClock, CALIBRATION_PX};
use crate::recovery::batch::{batch_stream, EventBatch};
use crate::recovery::dbscan::dbscan;
use crate::recovery::fit::{estimate_centroid, fit_cluster_lines, ClusterFit, StarCentroid};
use crate::recovery::search::{extract_support, search_jitter_with_chance, Hypothesis, HypothesisGrid};

/// Pipeline parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub t_batch_s: f64,
    /// Number of history batches clustered together with the current one.
    pub n_c: usize,
    pub eps: f64,
    pub min_pts: usize,
    /// Support radius around each centroid, pixels.
    pub radius: f64,
    pub grid: HypothesisGrid,
    /// Per-star matches below this support are discarded.
    pub min_support: u32,
    pub execution: Execution,
}

impl PipelineConfig {
    pub fn with_batch(t_batch_s: f64) -> Self {
        Self {
            t_batch_s,
            n_c: ((0.1 / t_batch_s) - 1e-9).ceil().max(1.0) as usize,
            eps: 3.0,
            min_pts: 5,
            radius: CALIBRATION_PX,
            grid: HypothesisGrid::covering(CALIBRATION_PX),
            min_support: 3,
            execution: Execution::default(),
        }
    }

    /// Nyquist batch for the band, window spanning 100 ms.
    pub fn for_band(band: &FrequencyBand) -> Self {
        Self::with_batch(band.batch_duration())
    }
}

/// One DBSCAN cluster of the window with its line fits.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: u32,
    pub events: Vec<Event>,
    pub fit: Option<ClusterFit>,
}

/// Clusters a window of events spatially. Returns the clusters (in id
/// order) and the events labeled noise.
pub fn cluster_events(window: &[Event], eps: f64, min_pts: usize) -> (Vec<Cluster>, Vec<Event>) {
    let pts: Vec<(i32, i32)> = window.iter().map(Event::pixel).collect();
    let clustering = dbscan(&pts, eps, min_pts);
    let clusters = clustering
        .members()
        .into_iter()
        .enumerate()
        .map(|(id, idx)| {
            let events: Vec<Event> = idx.iter().map(|&i| window[i]).collect();
            let fit = fit_cluster_lines(&events).ok();
            Cluster { id: id as u32, events, fit }
        })
        .collect();
    let noise = clustering.noise().into_iter().map(|i| window[i]).collect();
    (clusters, noise)
}

/// Per-star result within one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarEstimate {
    pub cluster: u32,
    pub centroid: StarCentroid,
    pub hypothesis: Hypothesis,
    /// Fusion weight: support above the chance level of the grid.
    pub weight: f64,
}

/// Lower weighted median. Falls back to equal weights when every weight is zero.
fn weighted_median(mut pairs: Vec<(i32, f64)>) -> i32 {
    pairs.sort_unstable_by_key(|p| p.0);
    let mut total: f64 = pairs.iter().map(|p| p.1).sum();
    if total <= 0.0 {
        pairs.iter_mut().for_each(|p| p.1 = 1.0);
        total = pairs.len() as f64;
    }
    let mut acc = 0.0;
    for (v, w) in &pairs {
        acc += w;
        if 2.0 * acc >= total {
            return *v;
        }
    }
    pairs.last().map_or(0, |p| p.0)
}

/// Estimate for batch `q` of `batches`, which must be cut from `events`.
pub fn estimate_batch(
    events: &[Event],
    batches: &[EventBatch<'_>],
    q: usize,
    clock: &PeriodClock,
    cfg: &PipelineConfig,
) -> (JitterEstimate, Vec<StarEstimate>) {
    let cur = &batches[q];
    let t_end = cur.end;
    let mut flags = EstimateFlags::empty();
    if q == 0 {
        flags |= EstimateFlags::FIRST_BATCH;
    }
    let lo = batches[q.saturating_sub(cfg.n_c)].offset;
    let hi = cur.offset + cur.len();
    let window = &events[lo..hi];

    let pts: Vec<(i32, i32)> = window.iter().map(Event::pixel).collect();
    let clustering = dbscan(&pts, cfg.eps, cfg.min_pts);
    if clustering.n_clusters == 0 {
        flags |= EstimateFlags::NO_STARS;
    }

    // Window-relative index ranges of the current and previous batch.
    let cur_lo = cur.offset - lo;
    let prev_lo = if q > 0 { batches[q - 1].offset.max(lo) - lo } else { cur_lo };
    let t_q = clock.tick(q as u64 + 1) as f64 * 1e-6;
    let t_prev = clock.tick(q as u64) as f64 * 1e-6;

    let mut stars = Vec::new();
    for (id, members) in clustering.members().into_iter().enumerate() {
        let fit = match fit_cluster_lines(members.iter().map(|&i| &window[i])) {
            Ok(f) => f,
            Err(_) => {
                flags |= EstimateFlags::DEGENERATE_FIT;
                continue;
            }
        };
        if q == 0 {
            continue;
        }
        let centroid = estimate_centroid(&fit, t_q);
        let prev_centroid = estimate_centroid(&fit, t_prev);
        let split = members.partition_point(|&i| i < cur_lo);
        let prev_start = members.partition_point(|&i| i < prev_lo);
        let curr_set = extract_support(members[split..].iter().map(|&i| &window[i]), centroid, cfg.radius);
        let prev_set =
            extract_support(members[prev_start..split].iter().map(|&i| &window[i]), prev_centroid, cfg.radius);
        if let Some((h, chance)) = search_jitter_with_chance(&prev_set, &curr_set, &cfg.grid) {
            if h.support >= cfg.min_support {
                let weight = (h.support as f64 - chance).max(0.0);
                stars.push(StarEstimate { cluster: id as u32, centroid, hypothesis: h, weight });
            }
        }
    }

    let estimate = if stars.is_empty() {
        if q > 0 {
            flags |= EstimateFlags::NO_SUPPORT;
        }
        JitterEstimate { batch_index: q as u64, t_end, dx: 0, dy: 0, support: 0, flags }
    } else {
        let dx = weighted_median(stars.iter().map(|s| (s.hypothesis.dx, s.weight)).collect());
        let dy = weighted_median(stars.iter().map(|s| (s.hypothesis.dy, s.weight)).collect());
        let support = stars.iter().map(|s| s.hypothesis.support).sum();
        JitterEstimate { batch_index: q as u64, t_end, dx, dy, support, flags }
    };
    (estimate, stars)
}

/// Runs the full pipeline over a sorted stream, one estimate per batch.
/// Each batch depends only on the events of its own window, so batches
/// are evaluated independently and returned in order.
pub fn run_pipeline(events: &[Event], cfg: &PipelineConfig, span_end: Option<Micros>) -> Result<Vec<JitterEstimate>> {
    let clock = PeriodClock::from_seconds(cfg.t_batch_s)?;
    let batches = batch_stream(events, cfg.t_batch_s, span_end)?;
    Ok(cfg.execution.map_range(0..batches.len(), |q| estimate_batch(events, &batches, q, &clock, cfg).0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Polarity;
    use crate::recovery::BatchWindow;

    #[test]
    fn weighted_median_cases() {
        assert_eq!(weighted_median(vec![(3, 1.0)]), 3);
        assert_eq!(weighted_median(vec![(1, 10.0), (8, 1.0), (9, 1.0)]), 1);
        assert_eq!(weighted_median(vec![(1, 1.0), (2, 1.0)]), 1);
        assert_eq!(weighted_median(vec![(-4, 5.0), (0, 2.0), (7, 9.0)]), 7);
        assert_eq!(weighted_median(vec![(5, 0.0), (-2, 0.0), (9, 0.0)]), 5);
    }

    #[test]
    fn default_window_spans_100ms() {
        assert_eq!(PipelineConfig::for_band(&FrequencyBand::FAST).n_c, 40);
        assert_eq!(PipelineConfig::for_band(&FrequencyBand::MEDIUM).n_c, 20);
        assert_eq!(PipelineConfig::for_band(&FrequencyBand::SLOW).n_c, 6);
        assert_eq!(PipelineConfig::for_band(&FrequencyBand::SLOW).grid.radius, 21);
    }

    /// Square blob of events per batch, shifted by `step` pixels each batch.
    fn moving_blob(batches: u64, t_batch: u64, step: (i32, i32)) -> Vec<Event> {
        let mut ev = Vec::new();
        for q in 0..batches {
            let (cx, cy) = (300 + step.0 * q as i32, 300 + step.1 * q as i32);
            for k in 0..25 {
                let (dx, dy) = (k % 5 - 2, k / 5 - 2);
                ev.push(Event::new(
                    q * t_batch + 10 + k as u64,
                    (cx + dx) as u16,
                    (cy + dy) as u16,
                    Polarity::Positive,
                ));
            }
        }
        ev.sort();
        ev
    }

    #[test]
    fn static_scene_gives_zero() {
        let ev = moving_blob(20, 5_000, (0, 0));
        let cfg = PipelineConfig::with_batch(0.005);
        let est = run_pipeline(&ev, &cfg, None).unwrap();
        assert_eq!(est.len(), 20);
        assert!(est.iter().all(|e| e.dx == 0 && e.dy == 0));
        assert!(est[0].flags.contains(EstimateFlags::FIRST_BATCH));
        assert!(est[1..].iter().all(|e| e.support == 25));
    }

    #[test]
    fn recovers_constant_shift() {
        let ev = moving_blob(20, 5_000, (2, -1));
        let cfg = PipelineConfig::with_batch(0.005);
        let est = run_pipeline(&ev, &cfg, None).unwrap();
        for e in &est[1..] {
            assert_eq!((e.dx, e.dy), (2, -1), "batch {}", e.batch_index);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let ev = moving_blob(40, 5_000, (1, 1));
        let mut cfg = PipelineConfig::with_batch(0.005);
        cfg.execution = Execution::Sequential;
        let a = run_pipeline(&ev, &cfg, None).unwrap();
        cfg.execution = Execution::Parallel;
        assert_eq!(a, run_pipeline(&ev, &cfg, None).unwrap());
    }

    #[test]
    fn window_slice_equals_batch_window_union() {
        let ev = moving_blob(15, 5_000, (1, 0));
        let batches = batch_stream(&ev, 0.005, None).unwrap();
        let n_c = 4;
        let mut w = BatchWindow::new(n_c).unwrap();
        for (q, b) in batches.iter().enumerate() {
            w.push(*b);
            let lo = batches[q.saturating_sub(n_c)].offset;
            assert_eq!(w.union(), &ev[lo..b.offset + b.len()]);
        }
    }

    #[test]
    fn empty_stream_flags() {
        let cfg = PipelineConfig::with_batch(0.0025);
        let est = run_pipeline(&[], &cfg, Some(10_000)).unwrap();
        assert_eq!(est.len(), 4);
        assert!(est.iter().all(|e| e.flags.contains(EstimateFlags::NO_STARS) && e.support == 0));
    }
}
