//! Synthetic sequences with known truth: star field, stage trajectory,
//! event rendering and telemetry.

mod render;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::event_io::{write_events, write_log, write_telemetry, LogEntry};
use crate::exec::Execution;
use crate::model::{BandName, Event, GroundTruthSample, MotionAxes, SensorGeometry};
use crate::telemetry_queue::{cosimulate, decode_entries, read_schedule, QueueAxis, RegisterSnapshot};

pub use render::{
    apply_refractory, generate_star_field, render_events, render_noise, render_star, NoiseModel, RenderParams, Star,
    MIN_PSF_SIGMA,
};
pub use trajectory::{
    generate_trajectory, sample_ground_truth, square_wave, JitterTrajectory, Position, ProtocolParams, Segment,
    TrajectoryBuilder,
};

/// `band = "static"` selects the motionless reference sequence.
mod band_or_static {
    use super::BandName;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &Option<BandName>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(b.map_or("static", BandName::as_str))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BandName>, D::Error> {
        let s = String::deserialize(d)?;
        if s.eq_ignore_ascii_case("static") {
            return Ok(None);
        }
        s.parse().map(Some).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    #[serde(with = "band_or_static")]
    pub band: Option<BandName>,
    pub axes: MotionAxes,
    pub stars: usize,
    /// Background events per second per pixel.
    pub noise_rate: f64,
    pub seed: u64,
    pub duration_s: f64,
    /// Omit the synchronization excursion.
    pub episode20_compat: bool,
    /// Route telemetry through the register queue with this many register
    /// writes per host read. Unset means lossless telemetry.
    pub queue_loss_ratio: Option<f64>,
    /// Actuator clock minus camera clock, µs.
    pub piezo_offset_us: i64,
    pub drift_px_s: f64,
    pub psf_sigma: f64,
    pub refractory_us: u64,
    pub protocol: ProtocolParams,
    pub render: RenderParams,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            band: Some(BandName::Slow),
            axes: MotionAxes::Axis1,
            stars: 12,
            noise_rate: 0.002,
            seed: 0,
            duration_s: 190.0,
            episode20_compat: false,
            queue_loss_ratio: None,
            piezo_offset_us: 0,
            drift_px_s: 1.56,
            psf_sigma: 1.0,
            refractory_us: 500,
            protocol: ProtocolParams::default(),
            render: RenderParams::default(),
        }
    }
}

impl SequenceConfig {
    pub fn name(&self) -> String {
        match self.band {
            None => "static".to_string(),
            Some(b) => format!("{b}_{}", self.axes),
        }
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel { background_rate: self.noise_rate, refractory_us: self.refractory_us }
    }

    pub fn render_params(&self, execution: Execution) -> RenderParams {
        RenderParams { drift_px_s: self.drift_px_s, execution, ..self.render }
    }

    pub fn protocol_params(&self) -> ProtocolParams {
        ProtocolParams { spike: self.protocol.spike && !self.episode20_compat, ..self.protocol }
    }
}

/// Everything generated for one sequence.
#[derive(Debug, Clone)]
pub struct SequenceOutput {
    pub config: SequenceConfig,
    pub geometry: SensorGeometry,
    pub stars: Vec<Star>,
    pub trajectory: JitterTrajectory,
    /// Camera clock, sorted.
    pub events: Vec<Event>,
    /// Lossless ground truth on the camera clock.
    pub truth: Vec<GroundTruthSample>,
    /// Telemetry as logged by the actuator host, on its own clock.
    pub telemetry: Vec<GroundTruthSample>,
    pub logs: Vec<LogEntry>,
    /// Register reads, when telemetry went through the queue.
    pub snapshots: Option<Vec<RegisterSnapshot>>,
}

/// Serialized files of one sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceFiles {
    pub events: Vec<u8>,
    pub telemetry: Vec<u8>,
    pub log: Vec<u8>,
}

impl SequenceOutput {
    pub fn encode(&self) -> Result<SequenceFiles> {
        let mut events = Vec::with_capacity(32 + 16 * self.events.len());
        write_events(&self.events, &mut events, &self.geometry, 0)?;
        let mut telemetry = Vec::new();
        write_telemetry(&self.telemetry, &mut telemetry)?;
        let mut log = Vec::new();
        write_log(&self.logs, &mut log)?;
        Ok(SequenceFiles { events, telemetry, log })
    }
}

/// Independent RNG stream per component.
fn sub_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Passes 30 Hz samples through the register queue read at `ratio`
/// register writes per snapshot, keeping the samples the host could
/// decode. An axis lost within a phase keeps its previous value.
fn lossy_telemetry(truth: &[GroundTruthSample], rate_hz: f64, ratio: f64) -> (Vec<GroundTruthSample>, Vec<RegisterSnapshot>) {
    let phase_us = 1e6 / rate_hz;
    let phases: Vec<(f64, f64)> = truth.iter().map(|g| (g.x_mm, g.y_mm)).collect();
    let iterations = (phases.len() as u64).div_ceil(2);
    let reads = read_schedule(iterations, phase_us, ratio);
    let t0 = truth.first().map_or(0, |g| g.t) as f64 - phase_us;
    let reads_abs: Vec<f64> = reads.iter().map(|r| r + t0).collect();
    let snaps = cosimulate(&phases, phase_us, &reads, |_, _| {});
    let snaps: Vec<RegisterSnapshot> = snaps
        .into_iter()
        .zip(reads_abs)
        .map(|(s, t)| RegisterSnapshot { read_t: t.max(0.0).round() as u64, ..s })
        .collect();
    let mut out: Vec<GroundTruthSample> = Vec::new();
    let (mut x, mut y) = (0.0, 0.0);
    for e in decode_entries(&snaps) {
        let idx = e.phase() as usize - 1;
        match e.axis {
            QueueAxis::Axis1 => x = e.position_mm,
            QueueAxis::Axis2 => y = e.position_mm,
        }
        let t = truth[idx].t;
        match out.last_mut() {
            Some(last) if last.t == t => {
                last.x_mm = x;
                last.y_mm = y;
            }
            _ => out.push(GroundTruthSample::new(t, x, y)),
        }
    }
    (out, snaps)
}

/// Generates one sequence.
pub fn simulate_sequence(config: &SequenceConfig, execution: Execution) -> Result<SequenceOutput> {
    let geometry = SensorGeometry::default();
    let protocol = config.protocol_params();
    let band = config.band.map(BandName::band);
    let trajectory =
        generate_trajectory(band.as_ref(), config.axes, config.duration_s, sub_seed(config.seed, 1), &protocol)?;
    let stars = generate_star_field(config.stars, &geometry, config.psf_sigma, 30.0, 50.0, sub_seed(config.seed, 2));
    let params = config.render_params(execution);
    let events = render_events(&stars, &trajectory, &geometry, &config.noise(), &params, sub_seed(config.seed, 3));
    let truth = sample_ground_truth(&trajectory, protocol.ground_truth_rate_hz)?;

    let (routed, snapshots) = match config.queue_loss_ratio {
        Some(r) => {
            let (t, s) = lossy_telemetry(&truth, protocol.ground_truth_rate_hz, r);
            (t, Some(s))
        }
        None => (truth.clone(), None),
    };
    let off = config.piezo_offset_us;
    let telemetry = routed.iter().map(|g| GroundTruthSample::new(g.t + off, g.x_mm, g.y_mm)).collect();
    let us = |s: f64| (s * 1e6).round() as i64 + off;
    let mut logs = vec![
        LogEntry::new("sequence_start", us(0.0)),
        LogEntry::new("homing_complete", us(trajectory.jitter_start_s)),
    ];
    if let Some(t) = trajectory.spike_start_s {
        logs.push(LogEntry::new("spike_command", us(t)));
    }
    logs.push(LogEntry::new("sequence_end", us(config.duration_s)));
    if let Some(s) = &snapshots {
        log::debug!("{} register reads, {} telemetry samples decoded", s.len(), routed.len());
    }
    Ok(SequenceOutput { config: config.clone(), geometry, stars, trajectory, events, truth, telemetry, logs, snapshots })
}

/// The ten sequences of one episode: the static reference and every
/// band/axes combination, each with its own seed.
pub fn episode_configs(base: &SequenceConfig, seed: u64) -> Vec<SequenceConfig> {
    let mut out = vec![SequenceConfig { band: None, seed: sub_seed(seed, 100), ..base.clone() }];
    for (i, band) in BandName::ALL.into_iter().enumerate() {
        for (j, axes) in MotionAxes::ALL.into_iter().enumerate() {
            let k = 101 + (3 * i + j) as u64;
            out.push(SequenceConfig { band: Some(band), axes, seed: sub_seed(seed, k), ..base.clone() });
        }
    }
    out
}
