use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use starjitter::{BandName, MotionAxes};

#[derive(Debug, Parser)]
#[command(name = "starjitter", version, about = "Simulate, estimate and score star-field jitter from event-camera data")]
pub struct Cli {
    /// RNG seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML run configuration with optional [sequence], [pipeline] and [align] tables.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,

    /// Run single-threaded. Outputs are identical either way.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic sequences: events, telemetry and protocol log.
    Simulate(SimulateArgs),
    /// Run the jitter pipeline over an event file.
    Estimate(EstimateArgs),
    /// Score estimates against telemetry: RMSE table and heatmap.
    Evaluate(EvaluateArgs),
    /// Decode a register-snapshot trace into a telemetry CSV.
    DecodeTelemetry(DecodeArgs),
    /// Find the camera/actuator clock offset from the synchronization spike.
    Align(AlignArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// slow, medium, fast or static.
    #[arg(long, value_parser = parse_sequence_band)]
    pub band: Option<SequenceBand>,

    /// axis1, axis2 or both.
    #[arg(long, value_parser = parse_axes)]
    pub axes: Option<MotionAxes>,

    /// Emit the static reference plus every band/axes pair (ten sequences).
    #[arg(long, conflicts_with_all = ["band", "axes"])]
    pub episode: bool,

    /// Sequence length, seconds.
    #[arg(long)]
    pub duration: Option<f64>,

    #[arg(long)]
    pub stars: Option<usize>,

    /// Background events per pixel per second.
    #[arg(long)]
    pub noise_rate: Option<f64>,

    /// Actuator clock minus camera clock, microseconds.
    #[arg(long, allow_hyphen_values = true)]
    pub offset_us: Option<i64>,

    /// Route telemetry through the register queue at this write:read ratio
    /// and also write the raw snapshot trace.
    #[arg(long)]
    pub queue_ratio: Option<f64>,

    /// Leave out the synchronization spike.
    #[arg(long)]
    pub no_spike: bool,
}

/// Pipeline settings shared by `estimate`.
#[derive(Debug, Args, Default)]
pub struct PipelineArgs {
    /// Band whose Nyquist batch to use (default slow).
    #[arg(long, value_parser = parse_band)]
    pub band: Option<BandName>,

    /// Batch duration override, milliseconds.
    #[arg(long)]
    pub t_batch_ms: Option<f64>,

    /// History batches per clustering window.
    #[arg(long)]
    pub n_c: Option<usize>,

    /// DBSCAN neighborhood radius, pixels.
    #[arg(long)]
    pub eps: Option<f64>,

    #[arg(long)]
    pub min_pts: Option<usize>,

    /// Support radius around each centroid, pixels.
    #[arg(long)]
    pub radius: Option<f64>,

    #[arg(long)]
    pub min_support: Option<u32>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Event file, native binary or CSV.
    pub events: PathBuf,

    #[command(flatten)]
    pub pipeline: PipelineArgs,

    /// Output file name inside --out (default: <events stem>_estimates.csv).
    #[arg(long, short)]
    pub output: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Estimates CSV written by `estimate`.
    #[arg(long)]
    pub estimates: PathBuf,

    /// Telemetry CSV on the actuator clock.
    #[arg(long)]
    pub telemetry: PathBuf,

    /// Event file used to align the clocks from the synchronization spike.
    #[arg(long)]
    pub events: Option<PathBuf>,

    /// Known clock offset (actuator minus camera); skips alignment.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "events")]
    pub offset_us: Option<i64>,

    /// Protocol log; scoring then starts 1 s after the spike command, or at
    /// the end of homing when there is no spike.
    #[arg(long)]
    pub log: Option<PathBuf>,

    /// Score only intervals ending after this camera time, microseconds.
    #[arg(long)]
    pub from_us: Option<i64>,

    /// Telemetry column names as `time,axis1,axis2`.
    #[arg(long)]
    pub columns: Option<String>,

    /// Half-width of the heatmap grid, pixels.
    #[arg(long, default_value_t = 21)]
    pub heatmap_radius: i32,

    /// Band label for the results table (default: from the estimates metadata).
    #[arg(long, value_parser = parse_band)]
    pub band: Option<BandName>,

    /// Axes label for the results table.
    #[arg(long, value_parser = parse_axes)]
    pub axes: Option<MotionAxes>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Register-snapshot trace CSV.
    pub trace: PathBuf,

    /// Controller loop delay per half-iteration, microseconds
    /// (default: whatever makes the loop run at 30 Hz).
    #[arg(long)]
    pub delay_us: Option<f64>,

    /// Host time of StepCount 0, microseconds.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub t0_us: i64,

    /// Output file name inside --out.
    #[arg(long, short, default_value = "telemetry_decoded.csv")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub events: PathBuf,

    #[arg(long)]
    pub telemetry: PathBuf,

    /// Protocol log; the spike command is checked against the found offset.
    #[arg(long)]
    pub log: Option<PathBuf>,

    #[arg(long)]
    pub columns: Option<String>,

    /// Output file name inside --out.
    #[arg(long, short, default_value = "alignment.json")]
    pub output: String,
}

fn parse_axes(s: &str) -> Result<MotionAxes, String> {
    s.parse().map_err(|e: starjitter::DomainError| e.message)
}

/// A jitter band, or `None` for the static reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceBand(pub Option<BandName>);

fn parse_sequence_band(s: &str) -> Result<SequenceBand, String> {
    if s.eq_ignore_ascii_case("static") {
        return Ok(SequenceBand(None));
    }
    parse_band(s).map(|b| SequenceBand(Some(b)))
}

fn parse_band(s: &str) -> Result<BandName, String> {
    s.parse().map_err(|e: starjitter::DomainError| e.message)
}
