//! Shared domain types and the calibration arithmetic that moves between
//! actuator millimeters, sensor pixels, jitter frequencies and batch durations.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::DomainError;

/// Microseconds since the start of a stream (camera clock unless noted).
pub type Micros = u64;

/// Pixels spanned by one calibration step of the stage.
pub const CALIBRATION_PX: f64 = 20.58;
/// Stage displacement of one calibration step.
pub const CALIBRATION_MM: f64 = 0.1;
/// Nominal jitter amplitude of the rig.
pub const JITTER_AMPLITUDE_MM: f64 = 0.1;
/// Amplitude of the clock synchronization spike.
pub const SYNC_SPIKE_MM: f64 = 0.4;
/// Travel range of the XY stage along each axis.
pub const STAGE_RANGE_MM: f64 = 22.0;
/// Rate at which the actuator reports ground truth.
pub const GROUND_TRUTH_RATE_HZ: f64 = 30.0;

/// Polarity of the brightness change that triggered an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Positive => 1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            -1 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }
}

/// One asynchronous sensor event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    // Field order gives the derived `Ord` the (t, x, y, p) stream order.
    pub t: Micros,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: Micros, x: u16, y: u16, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }

    pub fn pixel(&self) -> (i32, i32) {
        (self.x as i32, self.y as i32)
    }
}

/// Sensor resolution and the stage-to-sensor calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
    /// Pixel pitch in micrometers.
    pub pixel_pitch_um: f64,
    /// Calibration: `calibration_px` pixels per `calibration_mm` millimeters.
    calibration_px: f64,
    calibration_mm: f64,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl SensorGeometry {
    /// 1280×720 sensor with the rig's stage calibration.
    pub const DEFAULT: SensorGeometry = SensorGeometry {
        width: 1280,
        height: 720,
        pixel_pitch_um: 4.86,
        calibration_px: CALIBRATION_PX,
        calibration_mm: CALIBRATION_MM,
    };

    pub fn new(width: u16, height: u16, pixel_pitch_um: f64, px_per_mm: f64) -> Result<Self, DomainError> {
        if width == 0 || height == 0 {
            return Err(DomainError::new("sensor dimensions must be positive"));
        }
        if !(px_per_mm.is_finite() && px_per_mm > 0.0) {
            return Err(DomainError::new("calibration ratio must be positive"));
        }
        Ok(Self { width, height, pixel_pitch_um, calibration_px: px_per_mm, calibration_mm: 1.0 })
    }

    pub fn with_size(width: u16, height: u16) -> Result<Self, DomainError> {
        if width == 0 || height == 0 {
            return Err(DomainError::new("sensor dimensions must be positive"));
        }
        Ok(Self { width, height, ..Self::default() })
    }

    pub fn px_per_mm(&self) -> f64 {
        self.calibration_px / self.calibration_mm
    }

    pub fn mm_per_px(&self) -> f64 {
        self.calibration_mm / self.calibration_px
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }
}

/// Converts a stage displacement to a sensor displacement.
pub fn mm_to_pixels(d_mm: f64, geom: &SensorGeometry) -> f64 {
    // Scaled through the calibration step so 0.1 mm maps to exactly 20.58 px.
    d_mm / geom.calibration_mm * geom.calibration_px
}

pub fn pixels_to_mm(d_px: f64, geom: &SensorGeometry) -> f64 {
    d_px / geom.calibration_px * geom.calibration_mm
}

/// Back-and-forth frequency of a stage moving at `velocity_mm_s` over
/// amplitude `amplitude_mm`: one period covers the amplitude twice.
pub fn frequency_of_motion(velocity_mm_s: f64, amplitude_mm: f64) -> Result<f64, DomainError> {
    if !(amplitude_mm > 0.0) {
        return Err(DomainError::new("amplitude must be positive"));
    }
    if !(velocity_mm_s >= 0.0) {
        return Err(DomainError::new("velocity must be non-negative"));
    }
    Ok(velocity_mm_s / (2.0 * amplitude_mm))
}

/// Velocity needed to oscillate at `frequency_hz` over `amplitude_mm`.
pub fn velocity_for_frequency(frequency_hz: f64, amplitude_mm: f64) -> Result<f64, DomainError> {
    if !(amplitude_mm > 0.0) {
        return Err(DomainError::new("amplitude must be positive"));
    }
    Ok(2.0 * amplitude_mm * frequency_hz)
}

/// Batch length that samples a signal band-limited to `f_max_hz` at its
/// Nyquist rate, in seconds.
pub fn batch_duration(f_max_hz: f64) -> Result<f64, DomainError> {
    if !(f_max_hz > 0.0) || !f_max_hz.is_finite() {
        return Err(DomainError::new("maximum frequency must be positive"));
    }
    Ok(1.0 / (2.0 * f_max_hz))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandName {
    Slow,
    Medium,
    Fast,
}

impl BandName {
    pub const ALL: [BandName; 3] = [BandName::Slow, BandName::Medium, BandName::Fast];

    pub fn band(self) -> FrequencyBand {
        match self {
            BandName::Slow => FrequencyBand::SLOW,
            BandName::Medium => FrequencyBand::MEDIUM,
            BandName::Fast => FrequencyBand::FAST,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BandName::Slow => "slow",
            BandName::Medium => "medium",
            BandName::Fast => "fast",
        }
    }
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandName {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "slow" => Ok(BandName::Slow),
            "medium" => Ok(BandName::Medium),
            "fast" => Ok(BandName::Fast),
            other => Err(DomainError::new(format!("unknown band `{other}`"))),
        }
    }
}

/// One row of the jitter band table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBand {
    pub name: BandName,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub v_min_mm_s: f64,
    pub v_max_mm_s: f64,
}

impl FrequencyBand {
    pub const SLOW: FrequencyBand =
        FrequencyBand { name: BandName::Slow, f_min_hz: 0.0, f_max_hz: 30.0, v_min_mm_s: 1.0, v_max_mm_s: 6.0 };
    pub const MEDIUM: FrequencyBand =
        FrequencyBand { name: BandName::Medium, f_min_hz: 30.0, f_max_hz: 100.0, v_min_mm_s: 6.0, v_max_mm_s: 20.0 };
    pub const FAST: FrequencyBand =
        FrequencyBand { name: BandName::Fast, f_min_hz: 100.0, f_max_hz: 200.0, v_min_mm_s: 20.0, v_max_mm_s: 40.0 };

    pub fn all() -> [FrequencyBand; 3] {
        [Self::SLOW, Self::MEDIUM, Self::FAST]
    }

    /// Nyquist batch length for this band, in seconds.
    pub fn batch_duration(&self) -> f64 {
        1.0 / (2.0 * self.f_max_hz)
    }

    pub fn contains_velocity(&self, v: f64) -> bool {
        v >= self.v_min_mm_s && v <= self.v_max_mm_s
    }
}

/// Which actuator axes carry jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionAxes {
    Axis1,
    Axis2,
    #[serde(alias = "both")]
    BothAxes,
}

impl MotionAxes {
    pub const ALL: [MotionAxes; 3] = [MotionAxes::Axis1, MotionAxes::Axis2, MotionAxes::BothAxes];

    pub fn moves_axis1(self) -> bool {
        matches!(self, MotionAxes::Axis1 | MotionAxes::BothAxes)
    }

    pub fn moves_axis2(self) -> bool {
        matches!(self, MotionAxes::Axis2 | MotionAxes::BothAxes)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MotionAxes::Axis1 => "axis1",
            MotionAxes::Axis2 => "axis2",
            MotionAxes::BothAxes => "bothaxes",
        }
    }
}

impl fmt::Display for MotionAxes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MotionAxes {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "axis1" | "x" => Ok(MotionAxes::Axis1),
            "axis2" | "y" => Ok(MotionAxes::Axis2),
            "bothaxes" | "both" | "xy" => Ok(MotionAxes::BothAxes),
            other => Err(DomainError::new(format!("unknown axes `{other}`"))),
        }
    }
}

/// Per-batch displacement estimate in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JitterEstimate {
    pub batch_index: u64,
    /// End of the batch, camera clock.
    pub t_end: Micros,
    pub dx: i32,
    pub dy: i32,
    pub support: u32,
    pub flags: EstimateFlags,
}

bitflags::bitflags! {
    /// Degraded states carried alongside an estimate.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
    pub struct EstimateFlags: u8 {
        /// No cluster was found in the window.
        const NO_STARS = 0b0001;
        /// Clusters existed but none produced a usable match.
        const NO_SUPPORT = 0b0010;
        /// At least one cluster was skipped for a degenerate line fit.
        const DEGENERATE_FIT = 0b0100;
        /// No previous batch to compare against.
        const FIRST_BATCH = 0b1000;
    }
}

impl EstimateFlags {
    /// True when the (0, 0) value is a placeholder and not a measurement.
    pub fn is_unavailable(self) -> bool {
        self.intersects(EstimateFlags::NO_STARS | EstimateFlags::NO_SUPPORT | EstimateFlags::FIRST_BATCH)
    }
}

/// One decoded actuator position. The clock is the actuator's own, which is
/// why the timestamp is signed: after alignment it may precede the camera origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSample {
    pub t: i64,
    pub x_mm: f64,
    pub y_mm: f64,
}

impl GroundTruthSample {
    pub fn new(t: i64, x_mm: f64, y_mm: f64) -> Self {
        Self { t, x_mm, y_mm }
    }

    pub fn within_stage_range(&self) -> bool {
        self.x_mm.abs() <= STAGE_RANGE_MM && self.y_mm.abs() <= STAGE_RANGE_MM
    }
}

/// Rounded microsecond boundaries for a fixed, possibly fractional, period.
/// Batches and ground-truth ticks share this so their edges coincide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodClock {
    period_us: f64,
}

impl PeriodClock {
    pub fn from_seconds(period_s: f64) -> Result<Self, DomainError> {
        if !(period_s > 0.0) || !period_s.is_finite() {
            return Err(DomainError::new("period must be positive"));
        }
        Ok(Self { period_us: period_s * 1e6 })
    }

    pub fn from_rate(rate_hz: f64) -> Result<Self, DomainError> {
        if !(rate_hz > 0.0) || !rate_hz.is_finite() {
            return Err(DomainError::new("rate must be positive"));
        }
        Self::from_seconds(1.0 / rate_hz)
    }

    pub fn period_us(&self) -> f64 {
        self.period_us
    }

    pub fn tick(&self, index: u64) -> Micros {
        (index as f64 * self.period_us).round() as Micros
    }

    /// Index of the period containing `t`, i.e. `tick(q) <= t < tick(q + 1)`.
    pub fn index_of(&self, t: Micros) -> u64 {
        let mut q = (t as f64 / self.period_us).floor() as u64;
        while q > 0 && self.tick(q) > t {
            q -= 1;
        }
        while self.tick(q + 1) <= t {
            q += 1;
        }
        q
    }

    /// Number of periods needed to cover `[0, span)`.
    pub fn count_for_span(&self, span: Micros) -> u64 {
        if span == 0 {
            return 0;
        }
        self.index_of(span - 1) + 1
    }
}
