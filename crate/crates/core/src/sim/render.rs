use rustc_hash::FxHashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::model::{mm_to_pixels, Event, Micros, Polarity, SensorGeometry};
use crate::sim::trajectory::JitterTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Star {
    /// Sensor position at t = 0, pixels.
    pub x0: f64,
    pub y0: f64,
    pub intensity: f64,
    pub psf_sigma: f64,
}

/// Smallest PSF width for which a spot covers at least two pixels.
pub const MIN_PSF_SIGMA: f64 = 0.85;

/// Places `n` stars uniformly, at least `min_separation` px apart and
/// `margin` px from the sensor border. Fewer stars are returned if the
/// field cannot hold them.
pub fn generate_star_field(
    n: usize,
    geom: &SensorGeometry,
    psf_sigma: f64,
    margin: f64,
    min_separation: f64,
    seed: u64,
) -> Vec<Star> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (geom.width as f64, geom.height as f64);
    let mut stars: Vec<Star> = Vec::with_capacity(n);
    let mut attempts = 0;
    while stars.len() < n && attempts < 10_000 * n.max(1) {
        attempts += 1;
        let x0 = rng.random_range(margin..(w - margin).max(margin + 1.0));
        let y0 = rng.random_range(margin..(h - margin).max(margin + 1.0));
        if stars.iter().all(|s| (s.x0 - x0).hypot(s.y0 - y0) >= min_separation) {
            let intensity = rng.random_range(0.5..1.5);
            stars.push(Star { x0, y0, intensity, psf_sigma: psf_sigma.max(MIN_PSF_SIGMA) });
        }
    }
    stars
}

/// Background noise and pixel dead time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Events per second per pixel.
    pub background_rate: f64,
    /// Minimum spacing between two events of one pixel, µs.
    pub refractory_us: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { background_rate: 0.0, refractory_us: 500 }
    }
}

/// Sensor response parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderParams {
    /// Log-intensity change that fires an event.
    pub contrast: f64,
    /// Intensity floor added before the logarithm.
    pub dark_level: f64,
    /// Trajectory sampling step, µs.
    pub step_us: u64,
    /// Image motion below this is accumulated rather than rendered, px.
    pub min_motion_px: f64,
    /// Larger image steps are subdivided, px.
    pub max_motion_px: f64,
    /// Apparent sky drift along +x, px/s.
    pub drift_px_s: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            contrast: 0.3,
            dark_level: 0.05,
            step_us: 100,
            min_motion_px: 0.02,
            max_motion_px: 0.5,
            drift_px_s: 0.0,
            execution: Execution::default(),
        }
    }
}

/// Per-star pixel state over a rectangular region.
struct Region {
    x0: i32,
    y0: i32,
    w: i32,
    h: i32,
    reference: Vec<f64>,
    last: Vec<f64>,
    last_t: Vec<Option<Micros>>,
}

fn star_center(star: &Star, traj: &JitterTrajectory, geom: &SensorGeometry, drift: f64, t: f64) -> (f64, f64) {
    let (x, y) = traj.position_at(t);
    (star.x0 + mm_to_pixels(x, geom) + drift * t, star.y0 + mm_to_pixels(y, geom))
}

fn log_intensity(star: &Star, c: (f64, f64), px: i32, py: i32, dark: f64) -> f64 {
    let d2 = (px as f64 - c.0).powi(2) + (py as f64 - c.1).powi(2);
    let s2 = 2.0 * star.psf_sigma * star.psf_sigma;
    (dark + star.intensity * (-d2 / s2).exp()).ln()
}

/// Signal events of one star, sorted by time.
pub fn render_star(
    star: &Star,
    traj: &JitterTrajectory,
    geom: &SensorGeometry,
    noise: &NoiseModel,
    params: &RenderParams,
) -> Vec<Event> {
    let reach = 4.0 * star.psf_sigma + 1.0;
    let (mut minx, mut maxx, mut miny, mut maxy) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for s in &traj.segments {
        for p in [s.from, s.to] {
            let (x, y) = (star.x0 + mm_to_pixels(p.0, geom), star.y0 + mm_to_pixels(p.1, geom));
            minx = minx.min(x);
            maxx = maxx.max(x);
            miny = miny.min(y);
            maxy = maxy.max(y);
        }
    }
    let drift_end = params.drift_px_s * traj.duration_s;
    minx = minx.min(minx + drift_end);
    maxx = maxx.max(maxx + drift_end);
    let pad = reach + 1.0;
    let x0 = ((minx - pad).floor() as i32).max(0);
    let x1 = ((maxx + pad).ceil() as i32).min(geom.width as i32 - 1);
    let y0 = ((miny - pad).floor() as i32).max(0);
    let y1 = ((maxy + pad).ceil() as i32).min(geom.height as i32 - 1);
    if x1 < x0 || y1 < y0 {
        log::warn!("star at ({:.1}, {:.1}) never reaches the sensor", star.x0, star.y0);
        return Vec::new();
    }
    let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
    let c0 = star_center(star, traj, geom, params.drift_px_s, 0.0);
    let mut reg = Region {
        x0,
        y0,
        w,
        h,
        reference: Vec::with_capacity((w * h) as usize),
        last: Vec::new(),
        last_t: vec![None; (w * h) as usize],
    };
    for py in y0..=y1 {
        for px in x0..=x1 {
            reg.reference.push(log_intensity(star, c0, px, py, params.dark_level));
        }
    }
    reg.last = reg.reference.clone();

    let mut out = Vec::new();
    let end_us = (traj.duration_s * 1e6).round() as u64;
    let mut prev_t = 0.0;
    let mut prev_c = c0;
    let mut k = 1u64;
    while k * params.step_us <= end_us {
        let t = (k * params.step_us) as f64 * 1e-6;
        k += 1;
        let c = star_center(star, traj, geom, params.drift_px_s, t);
        let moved = (c.0 - prev_c.0).hypot(c.1 - prev_c.1);
        if moved < params.min_motion_px {
            continue;
        }
        let parts = (moved / params.max_motion_px).ceil().max(1.0) as u32;
        let (mut tp, mut cp) = (prev_t, prev_c);
        for j in 1..=parts {
            let tj = prev_t + (t - prev_t) * j as f64 / parts as f64;
            let cj = if j == parts { c } else { star_center(star, traj, geom, params.drift_px_s, tj) };
            step_region(&mut reg, star, cp, cj, tp, tj, reach, noise, params, &mut out);
            (tp, cp) = (tj, cj);
        }
        prev_t = t;
        prev_c = c;
    }
    out.sort_unstable();
    out
}

/// Advances every pixel near the old or new center from `t0` to `t1` and
/// emits threshold crossings at linearly interpolated times.
#[allow(clippy::too_many_arguments)]
fn step_region(
    reg: &mut Region,
    star: &Star,
    c0: (f64, f64),
    c1: (f64, f64),
    t0: f64,
    t1: f64,
    reach: f64,
    noise: &NoiseModel,
    params: &RenderParams,
    out: &mut Vec<Event>,
) {
    let lo_x = ((c0.0.min(c1.0) - reach).floor() as i32).max(reg.x0);
    let hi_x = ((c0.0.max(c1.0) + reach).ceil() as i32).min(reg.x0 + reg.w - 1);
    let lo_y = ((c0.1.min(c1.1) - reach).floor() as i32).max(reg.y0);
    let hi_y = ((c0.1.max(c1.1) + reach).ceil() as i32).min(reg.y0 + reg.h - 1);
    let theta = params.contrast;
    for py in lo_y..=hi_y {
        for px in lo_x..=hi_x {
            let i = ((py - reg.y0) * reg.w + (px - reg.x0)) as usize;
            let l0 = reg.last[i];
            let l1 = log_intensity(star, c1, px, py, params.dark_level);
            reg.last[i] = l1;
            let dl = l1 - l0;
            if dl == 0.0 {
                continue;
            }
            loop {
                let r = reg.reference[i];
                let (level, pol) = if l1 - r >= theta {
                    (r + theta, Polarity::Positive)
                } else if r - l1 >= theta {
                    (r - theta, Polarity::Negative)
                } else {
                    break;
                };
                reg.reference[i] = level;
                let frac = ((level - l0) / dl).clamp(0.0, 1.0);
                let t = ((t0 + frac * (t1 - t0)) * 1e6).round() as Micros;
                if reg.last_t[i].is_some_and(|lt| t < lt + noise.refractory_us) {
                    continue;
                }
                reg.last_t[i] = Some(t);
                out.push(Event::new(t, px as u16, py as u16, pol));
            }
        }
    }
}

/// Uniform background events: Poisson total count, uniform pixel and time,
/// fair-coin polarity. Sorted by time.
pub fn render_noise(geom: &SensorGeometry, rate: f64, duration_s: f64, seed: u64) -> Vec<Event> {
    let mean = rate * duration_s * geom.width as f64 * geom.height as f64;
    if !(mean > 0.0) {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize;
    let end = (duration_s * 1e6).round() as u64;
    let mut out: Vec<Event> = (0..n)
        .map(|_| {
            let t = rng.random_range(0..end.max(1));
            let x = rng.random_range(0..geom.width);
            let y = rng.random_range(0..geom.height);
            let p = if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            Event::new(t, x, y, p)
        })
        .collect();
    out.sort_unstable();
    out
}

/// Drops events that follow another event of the same pixel by less than
/// `refractory_us`. Input must be sorted.
pub fn apply_refractory(events: Vec<Event>, refractory_us: u64) -> Vec<Event> {
    if refractory_us == 0 {
        return events;
    }
    let mut last: FxHashMap<(u16, u16), Micros> = FxHashMap::default();
    events
        .into_iter()
        .filter(|e| match last.get(&(e.x, e.y)) {
            Some(&t) if e.t < t + refractory_us => false,
            _ => {
                last.insert((e.x, e.y), e.t);
                true
            }
        })
        .collect()
}

/// Renders all stars and background noise into one sorted stream.
pub fn render_events(
    stars: &[Star],
    traj: &JitterTrajectory,
    geom: &SensorGeometry,
    noise: &NoiseModel,
    params: &RenderParams,
    seed: u64,
) -> Vec<Event> {
    let per_star = params.execution.map(stars, |s| render_star(s, traj, geom, noise, params));
    let mut all: Vec<Event> = per_star.into_iter().flatten().collect();
    all.extend(render_noise(geom, noise.background_rate, traj.duration_s, seed ^ 0x6e_6f69_7365));
    all.sort_unstable();
    apply_refractory(all, noise.refractory_us)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MotionAxes;
    use crate::sim::trajectory::TrajectoryBuilder;

    fn one_star() -> Star {
        Star { x0: 200.0, y0: 150.0, intensity: 1.0, psf_sigma: 1.0 }
    }

    #[test]
    fn static_scene_is_silent() {
        let t = JitterTrajectory::stationary(2.0);
        let ev = render_events(&[one_star()], &t, &SensorGeometry::default(), &NoiseModel::default(), &RenderParams::default(), 1);
        assert!(ev.is_empty());
    }

    #[test]
    fn drift_produces_events_along_x() {
        let t = JitterTrajectory::stationary(4.0);
        let p = RenderParams { drift_px_s: 1.56, ..RenderParams::default() };
        let ev = render_events(&[one_star()], &t, &SensorGeometry::default(), &NoiseModel::default(), &p, 1);
        assert!(!ev.is_empty());
        let (lo, hi) = ev.iter().fold((u16::MAX, 0), |(lo, hi), e| (lo.min(e.x), hi.max(e.x)));
        assert!((hi - lo) as f64 >= 6.0 && (hi - lo) as f64 <= 18.0, "{lo}..{hi}");
    }

    #[test]
    fn single_step_traces_calibrated_track() {
        let mut b = TrajectoryBuilder::new();
        b.hold(0.05).move_at((0.1, 0.0), 2.0, 0.05).hold(0.05);
        let t = b.finish(0.2);
        let geom = SensorGeometry::default();
        let ev = render_events(&[one_star()], &t, &geom, &NoiseModel::default(), &RenderParams::default(), 1);
        // Column span of events on the star's row.
        let row: Vec<_> = ev.iter().filter(|e| e.y == 150).collect();
        let lo = row.iter().map(|e| e.x).min().unwrap() as f64;
        let hi = row.iter().map(|e| e.x).max().unwrap() as f64;
        let track = hi - lo;
        // The spot adds a few pixels on both ends.
        assert!((20.0..=20.58 + 8.0).contains(&track), "{track}");
        assert!(ev.iter().all(|e| e.t >= 49_000 && e.t <= 110_000));
    }

    #[test]
    fn per_pixel_refractory_holds() {
        let t = crate::sim::trajectory::square_wave(MotionAxes::BothAxes, 0.1, 2, 3, 0.005, 1.0).unwrap();
        let noise = NoiseModel { background_rate: 0.5, refractory_us: 800 };
        let geom = SensorGeometry::with_size(400, 300).unwrap();
        let ev = render_events(&[one_star()], &t, &geom, &noise, &RenderParams::default(), 3);
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        let mut last: FxHashMap<(u16, u16), u64> = FxHashMap::default();
        for e in &ev {
            if let Some(&p) = last.get(&(e.x, e.y)) {
                assert!(e.t - p >= 800);
            }
            last.insert((e.x, e.y), e.t);
        }
    }

    #[test]
    fn noise_count_is_poisson() {
        let geom = SensorGeometry::with_size(200, 100).unwrap();
        let (rate, dur) = (0.4, 5.0);
        let mean = rate * dur * 200.0 * 100.0;
        for seed in 0..5 {
            let n = render_noise(&geom, rate, dur, seed).len() as f64;
            assert!((n - mean).abs() <= 3.0 * mean.sqrt(), "{n} vs {mean}");
        }
    }

    #[test]
    fn star_field_spacing() {
        let geom = SensorGeometry::default();
        let s = generate_star_field(20, &geom, 1.0, 30.0, 50.0, 8);
        assert_eq!(s.len(), 20);
        for (i, a) in s.iter().enumerate() {
            assert!(a.x0 >= 30.0 && a.x0 <= 1250.0 && a.y0 >= 30.0 && a.y0 <= 690.0);
            assert!((0.5..1.5).contains(&a.intensity));
            for b in &s[i + 1..] {
                assert!((a.x0 - b.x0).hypot(a.y0 - b.y0) >= 50.0);
            }
        }
    }

    #[test]
    fn sequential_and_parallel_render_agree() {
        let t = crate::sim::trajectory::square_wave(MotionAxes::Axis1, 0.05, 3, 3, 0.005, 0.5).unwrap();
        let stars = generate_star_field(4, &SensorGeometry::default(), 1.0, 30.0, 50.0, 2);
        let mut p = RenderParams { execution: Execution::Sequential, ..RenderParams::default() };
        let noise = NoiseModel { background_rate: 0.01, refractory_us: 500 };
        let a = render_events(&stars, &t, &SensorGeometry::default(), &noise, &p, 4);
        p.execution = Execution::Parallel;
        assert_eq!(a, render_events(&stars, &t, &SensorGeometry::default(), &noise, &p, 4));
    }
}
