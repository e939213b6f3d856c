use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    FrequencyBand, GroundTruthSample, Micros, MotionAxes, PeriodClock, GROUND_TRUTH_RATE_HZ, JITTER_AMPLITUDE_MM,
    SYNC_SPIKE_MM,
};

/// Stage position in millimeters.
pub type Position = (f64, f64);

/// One piece of the trajectory over `[t0, t1)`, seconds on the sim clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub from: Position,
    pub to: Position,
    /// Fraction of the duration spent accelerating (and again
    /// decelerating). Zero gives constant velocity; holds have
    /// `from == to`.
    pub ramp: f64,
}

impl Segment {
    /// Traveled fraction of the move at normalized time `tau` in [0, 1].
    fn progress(&self, tau: f64) -> f64 {
        let a = self.ramp;
        if a <= 0.0 {
            return tau;
        }
        let k = 2.0 * a * (1.0 - a);
        if tau < a {
            tau * tau / k
        } else if tau <= 1.0 - a {
            (tau - a / 2.0) / (1.0 - a)
        } else {
            1.0 - (1.0 - tau).powi(2) / k
        }
    }

    pub fn position_at(&self, t: f64) -> Position {
        if self.from == self.to || self.t1 <= self.t0 {
            return self.to;
        }
        let tau = ((t - self.t0) / (self.t1 - self.t0)).clamp(0.0, 1.0);
        let u = self.progress(tau);
        (self.from.0 + u * (self.to.0 - self.from.0), self.from.1 + u * (self.to.1 - self.from.1))
    }

    pub fn is_hold(&self) -> bool {
        self.from == self.to
    }

    /// Cruise speed in mm/s (zero for holds).
    pub fn cruise_speed(&self) -> f64 {
        let d = ((self.to.0 - self.from.0).powi(2) + (self.to.1 - self.from.1).powi(2)).sqrt();
        d / ((self.t1 - self.t0) * (1.0 - self.ramp))
    }
}

/// Tunables of the acquisition protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolParams {
    pub amplitude_mm: f64,
    pub baseline_s: f64,
    pub homing_s: f64,
    pub prologue_moves: u32,
    pub prologue_speed_mm_s: f64,
    pub spike: bool,
    pub spike_mm: f64,
    pub spike_hold_s: f64,
    /// Stationary pause after each jitter move. The rig's measured
    /// fine-tuning time is 25 ms; the default of zero keeps the reversal
    /// rate inside the band's frequency range.
    pub settle_s: f64,
    /// Acceleration time as a fraction of the cruise time of a move.
    pub accel_fraction: f64,
    pub ground_truth_rate_hz: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            amplitude_mm: JITTER_AMPLITUDE_MM,
            baseline_s: 5.0,
            homing_s: 5.0,
            prologue_moves: 10,
            prologue_speed_mm_s: 40.0,
            spike: true,
            spike_mm: SYNC_SPIKE_MM,
            spike_hold_s: 0.1,
            settle_s: 0.0,
            accel_fraction: 0.05,
            ground_truth_rate_hz: GROUND_TRUTH_RATE_HZ,
        }
    }
}

impl ProtocolParams {
    /// Start of the jitter phase, where telemetry begins.
    pub fn jitter_start_s(&self) -> f64 {
        self.baseline_s + self.homing_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JitterTrajectory {
    pub segments: Vec<Segment>,
    pub band: Option<FrequencyBand>,
    pub axes: MotionAxes,
    pub seed: u64,
    pub duration_s: f64,
    /// Telemetry starts here.
    pub jitter_start_s: f64,
    /// Start of the synchronization excursion, if any.
    pub spike_start_s: Option<f64>,
}

impl JitterTrajectory {
    /// Stationary at the origin for `duration_s`.
    pub fn stationary(duration_s: f64) -> Self {
        Self {
            segments: vec![Segment { t0: 0.0, t1: duration_s, from: (0.0, 0.0), to: (0.0, 0.0), ramp: 0.0 }],
            band: None,
            axes: MotionAxes::Axis1,
            seed: 0,
            duration_s,
            jitter_start_s: 0.0,
            spike_start_s: None,
        }
    }

    pub fn position_at(&self, t: f64) -> Position {
        let i = self.segments.partition_point(|s| s.t1 <= t);
        match self.segments.get(i) {
            Some(s) => s.position_at(t),
            None => self.segments.last().map_or((0.0, 0.0), |s| s.to),
        }
    }

    /// Samples every `step_us` over the whole duration.
    pub fn dense_samples(&self, step_us: u64) -> Vec<GroundTruthSample> {
        let end = (self.duration_s * 1e6).round() as u64;
        self.dense_samples_between(0, end, step_us)
    }

    /// Samples every `step_us` over `[t0_us, t1_us]`.
    pub fn dense_samples_between(&self, t0_us: u64, t1_us: u64, step_us: u64) -> Vec<GroundTruthSample> {
        assert!(step_us > 0, "step must be positive");
        (0..=(t1_us.saturating_sub(t0_us)) / step_us)
            .map(|k| {
                let t = t0_us + k * step_us;
                let (x, y) = self.position_at(t as f64 * 1e-6);
                GroundTruthSample::new(t as i64, x, y)
            })
            .collect()
    }

    /// Largest per-axis magnitude reached.
    pub fn max_abs(&self) -> (f64, f64) {
        self.segments.iter().fold((0.0f64, 0.0f64), |(mx, my), s| {
            (mx.max(s.from.0.abs()).max(s.to.0.abs()), my.max(s.from.1.abs()).max(s.to.1.abs()))
        })
    }
}

/// Incremental builder over consecutive segments.
#[derive(Debug, Clone)]
pub struct TrajectoryBuilder {
    segments: Vec<Segment>,
    t: f64,
    pos: Position,
}

impl Default for TrajectoryBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl TrajectoryBuilder {
    pub fn new() -> Self {
        Self { segments: Vec::new(), t: 0.0, pos: (0.0, 0.0) }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn position(&self) -> Position {
        self.pos
    }

    pub fn hold(&mut self, duration_s: f64) -> &mut Self {
        if duration_s > 0.0 {
            self.segments.push(Segment { t0: self.t, t1: self.t + duration_s, from: self.pos, to: self.pos, ramp: 0.0 });
            self.t += duration_s;
        }
        self
    }

    pub fn hold_until(&mut self, t: f64) -> &mut Self {
        let d = t - self.t;
        self.hold(d)
    }

    /// Move to `to` in exactly `duration_s`.
    pub fn move_over(&mut self, to: Position, duration_s: f64, ramp: f64) -> &mut Self {
        self.segments.push(Segment { t0: self.t, t1: self.t + duration_s, from: self.pos, to, ramp });
        self.t += duration_s;
        self.pos = to;
        self
    }

    /// Trapezoidal move to `to` cruising at `speed` mm/s along the path.
    /// The acceleration time is `accel_fraction` of the cruise time.
    pub fn move_at(&mut self, to: Position, speed: f64, accel_fraction: f64) -> &mut Self {
        let d = ((to.0 - self.pos.0).powi(2) + (to.1 - self.pos.1).powi(2)).sqrt();
        if d == 0.0 {
            return self;
        }
        let cruise = d / speed;
        let ta = accel_fraction * cruise;
        let total = cruise + ta;
        self.move_over(to, total, ta / total)
    }

    pub fn finish(self, duration_s: f64) -> JitterTrajectory {
        let mut b = self;
        b.hold_until(duration_s);
        let mut segments = b.segments;
        segments.retain(|s| s.t0 < duration_s);
        JitterTrajectory {
            segments,
            band: None,
            axes: MotionAxes::Axis1,
            seed: 0,
            duration_s,
            jitter_start_s: 0.0,
            spike_start_s: None,
        }
    }
}

fn target(axes: MotionAxes, d: f64) -> Position {
    (if axes.moves_axis1() { d } else { 0.0 }, if axes.moves_axis2() { d } else { 0.0 })
}

/// Full acquisition protocol: static baseline, homing to the origin, a
/// short train of fast moves, the synchronization excursion, and then
/// alternating moves between the origin and `amplitude` with the speed
/// redrawn from the band at every reversal. With `band == None` the stage
/// stays at the origin throughout.
pub fn generate_trajectory(
    band: Option<&FrequencyBand>,
    axes: MotionAxes,
    duration_s: f64,
    seed: u64,
    params: &ProtocolParams,
) -> Result<JitterTrajectory> {
    if !(duration_s > 0.0) {
        return Err(Error::Contract("duration must be positive".into()));
    }
    let jitter_start = params.jitter_start_s();
    let Some(band) = band else {
        let mut t = JitterTrajectory::stationary(duration_s);
        t.axes = axes;
        t.seed = seed;
        t.jitter_start_s = jitter_start.min(duration_s);
        return Ok(t);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = params.amplitude_mm;
    let gt = PeriodClock::from_rate(params.ground_truth_rate_hz)?;
    let slot = |k: u64| jitter_start + gt.tick(k) as f64 * 1e-6;

    let mut b = TrajectoryBuilder::new();
    b.hold(jitter_start);
    // One prologue move per telemetry slot so each is visible in telemetry.
    let mut k = 0u64;
    for m in 0..params.prologue_moves {
        b.hold_until(slot(k));
        let d = if m % 2 == 0 { a } else { 0.0 };
        b.move_at(target(axes, d), params.prologue_speed_mm_s, params.accel_fraction);
        k += 1;
    }
    b.hold_until(slot(k) + params.settle_s);
    if b.position() != (0.0, 0.0) {
        b.move_at((0.0, 0.0), params.prologue_speed_mm_s, params.accel_fraction);
    }
    let mut spike_start = None;
    if params.spike {
        while slot(k) < b.time() + params.settle_s {
            k += 1;
        }
        b.hold_until(slot(k));
        spike_start = Some(b.time());
        b.move_at(target(axes, params.spike_mm), params.prologue_speed_mm_s, params.accel_fraction);
        b.hold(params.spike_hold_s);
        b.move_at((0.0, 0.0), params.prologue_speed_mm_s, params.accel_fraction);
    }
    b.hold(params.settle_s);

    let mut out = true;
    while b.time() < duration_s {
        let v = rng.random_range(band.v_min_mm_s..=band.v_max_mm_s);
        let d = if out { a } else { 0.0 };
        b.move_at(target(axes, d), v, params.accel_fraction);
        b.hold(params.settle_s);
        out = !out;
    }
    let mut traj = b.finish(duration_s);
    traj.band = Some(*band);
    traj.axes = axes;
    traj.seed = seed;
    traj.jitter_start_s = jitter_start;
    traj.spike_start_s = spike_start;
    Ok(traj)
}

/// Square wave in position along `axes`: hold, then step to `level_mm` at
/// constant speed over `step_periods`, hold, step back, and so on. Segment
/// boundaries fall on the integer-microsecond ticks of a `period_s` clock,
/// the same ticks batches use.
pub fn square_wave(
    axes: MotionAxes,
    level_mm: f64,
    step_periods: u64,
    hold_periods: u64,
    period_s: f64,
    duration_s: f64,
) -> Result<JitterTrajectory> {
    let clock = PeriodClock::from_seconds(period_s)?;
    let at = |q: u64| clock.tick(q) as f64 * 1e-6;
    let mut b = TrajectoryBuilder::new();
    let mut q = hold_periods;
    b.hold_until(at(q));
    let mut up = true;
    while at(q) < duration_s {
        let to = target(axes, if up { level_mm } else { 0.0 });
        b.move_over(to, at(q + step_periods) - b.time(), 0.0);
        q += step_periods + hold_periods;
        b.hold_until(at(q));
        up = !up;
    }
    let mut t = b.finish(duration_s);
    t.axes = axes;
    Ok(t)
}

/// Samples at exactly `1 / rate` spacing from the jitter-phase start, on
/// the sim clock (microseconds).
pub fn sample_ground_truth(traj: &JitterTrajectory, rate_hz: f64) -> Result<Vec<GroundTruthSample>> {
    let clock = PeriodClock::from_rate(rate_hz)?;
    let start = (traj.jitter_start_s * 1e6).round() as Micros;
    let end = (traj.duration_s * 1e6).round() as Micros;
    let n = clock.count_for_span(end.saturating_sub(start));
    Ok((0..n)
        .map(|i| {
            let t = start + clock.tick(i);
            let (x, y) = traj.position_at(t as f64 * 1e-6);
            GroundTruthSample::new(t as i64, x, y)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn traj(band: &FrequencyBand, axes: MotionAxes, d: f64, seed: u64) -> JitterTrajectory {
        generate_trajectory(Some(band), axes, d, seed, &ProtocolParams::default()).unwrap()
    }

    #[test]
    fn segments_are_contiguous_and_continuous() {
        let t = traj(&FrequencyBand::MEDIUM, MotionAxes::BothAxes, 30.0, 3);
        for w in t.segments.windows(2) {
            assert!((w[0].t1 - w[1].t0).abs() < 1e-12);
            assert_eq!(w[0].to, w[1].from);
        }
        assert_eq!(t.segments[0].t0, 0.0);
        // Position is continuous across boundaries.
        for s in &t.segments {
            let p = t.position_at(s.t1 - 1e-9);
            let q = t.position_at(s.t1 + 1e-9);
            assert!((p.0 - q.0).abs() < 1e-6 && (p.1 - q.1).abs() < 1e-6);
        }
    }

    #[test]
    fn trapezoid_progress_is_monotone_and_exact_at_ends() {
        let s = Segment { t0: 1.0, t1: 2.0, from: (0.0, 0.0), to: (0.1, 0.0), ramp: 0.1 };
        let mut last = -1.0;
        for k in 0..=1000 {
            let x = s.position_at(1.0 + k as f64 / 1000.0).0;
            assert!(x >= last);
            last = x;
        }
        assert_eq!(s.position_at(1.0).0, 0.0);
        assert!((s.position_at(2.0).0 - 0.1).abs() < 1e-15);
        assert!((s.position_at(1.5).0 - 0.05).abs() < 1e-12);
        // Cruise speed: 0.1 mm over 0.9 s of cruise-equivalent time.
        assert!((s.cruise_speed() - 0.1 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn protocol_bounds_and_speeds() {
        for band in FrequencyBand::all() {
            for axes in MotionAxes::ALL {
                let t = traj(&band, axes, 40.0, 9);
                let spike = t.spike_start_s.unwrap();
                assert!(spike > t.jitter_start_s);
                let mut excursions = 0;
                for s in &t.segments {
                    let m = s.to.0.abs().max(s.to.1.abs());
                    let m0 = s.from.0.abs().max(s.from.1.abs());
                    if m > JITTER_AMPLITUDE_MM + 1e-12 {
                        assert!((m - SYNC_SPIKE_MM).abs() < 1e-12);
                        if m0 <= JITTER_AMPLITUDE_MM {
                            excursions += 1;
                        }
                    }
                    if !s.is_hold() && s.t0 > spike + 1.0 && s.t1 < t.duration_s {
                        let v = s.cruise_speed();
                        assert!(band.contains_velocity(v) || (v - band.v_max_mm_s).abs() < 1e-9, "{v}");
                    }
                }
                assert_eq!(excursions, 1);
                if !axes.moves_axis2() {
                    assert!(t.segments.iter().all(|s| s.from.1 == 0.0 && s.to.1 == 0.0));
                }
                if !axes.moves_axis1() {
                    assert!(t.segments.iter().all(|s| s.from.0 == 0.0 && s.to.0 == 0.0));
                }
            }
        }
    }

    #[test]
    fn cruise_dominates_moves() {
        let t = traj(&FrequencyBand::FAST, MotionAxes::Axis1, 20.0, 1);
        for s in t.segments.iter().filter(|s| !s.is_hold()) {
            assert!(1.0 - 2.0 * s.ramp >= 0.8);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = traj(&FrequencyBand::SLOW, MotionAxes::Axis1, 30.0, 5);
        assert_eq!(a, traj(&FrequencyBand::SLOW, MotionAxes::Axis1, 30.0, 5));
        assert_ne!(a, traj(&FrequencyBand::SLOW, MotionAxes::Axis1, 30.0, 6));
    }

    #[test]
    fn ground_truth_counts_and_interpolation() {
        let t = traj(&FrequencyBand::MEDIUM, MotionAxes::Axis1, 190.0, 2);
        let gt = sample_ground_truth(&t, 30.0).unwrap();
        assert_eq!(gt.len(), 5400);
        assert_eq!(gt[0].t, 10_000_000);
        assert_eq!(gt[1].t, 10_033_333);
        assert_eq!(gt[2].t, 10_066_667);
        // Dense oracle: linear interpolation between 5 µs samples around
        // each ground-truth time.
        for g in gt.iter().step_by(7) {
            let lo = (g.t as u64 / 5) * 5;
            let d = t.dense_samples_between(lo, lo + 5, 5);
            let w = (g.t as u64 - lo) as f64 / 5.0;
            let x = d[0].x_mm + w * (d[1].x_mm - d[0].x_mm);
            assert!((x - g.x_mm).abs() < 1e-6, "{} {x} {}", g.t, g.x_mm);
        }
        let flat = JitterTrajectory::stationary(20.0);
        assert!(sample_ground_truth(&flat, 30.0).unwrap().iter().all(|g| g.x_mm == 0.0 && g.y_mm == 0.0));
    }

    /// Fraction of axis-1 spectral energy of the jitter phase in
    /// `[lo_hz, hi_hz]`, from sampling at `rate_hz`.
    fn band_energy(t: &JitterTrajectory, rate_hz: f64, lo_hz: f64, hi_hz: f64) -> f64 {
        let start = t.spike_start_s.unwrap() + 1.0;
        let n = ((t.duration_s - start) * rate_hz) as usize;
        let x: Vec<f64> = (0..n).map(|k| t.position_at(start + k as f64 / rate_hz).0).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let bin = |f: f64| ((f * n as f64 / rate_hz).round() as usize).clamp(1, n / 2);
        let energy = |lo: usize, hi: usize| buf[lo..=hi].iter().map(|c| c.norm_sqr()).sum::<f64>();
        energy(bin(lo_hz), bin(hi_hz)) / energy(1, n / 2)
    }

    #[test]
    fn slow_band_spectrum_below_30hz() {
        let t = traj(&FrequencyBand::SLOW, MotionAxes::Axis1, 190.0, 4);
        let frac = band_energy(&t, 1000.0, 0.0, 30.0);
        assert!(frac >= 0.9, "{frac}");
    }

    #[test]
    fn reversal_rate_follows_band() {
        for band in [FrequencyBand::MEDIUM, FrequencyBand::FAST] {
            let t = traj(&band, MotionAxes::Axis1, 60.0, 4);
            let inside = band_energy(&t, 4000.0, band.f_min_hz * 0.9, band.f_max_hz);
            assert!(inside >= 0.85, "{:?}: {inside}", band.name);
        }
    }

    #[test]
    fn square_wave_shape() {
        let t = square_wave(MotionAxes::Axis1, 0.1, 5, 10, 0.01, 1.0).unwrap();
        assert_eq!(t.position_at(0.05), (0.0, 0.0));
        assert!((t.position_at(0.125).0 - 0.05).abs() < 1e-12);
        assert_eq!(t.position_at(0.2), (0.1, 0.0));
        assert_eq!(t.position_at(0.249), (0.1, 0.0));
        assert!((t.position_at(0.275).0 - 0.05).abs() < 1e-12);
        assert_eq!(t.position_at(0.31), (0.0, 0.0));
    }
}
