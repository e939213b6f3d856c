use std::path::Path;

use serde::Serialize;
use starjitter::evaluation::{aggregate_estimates, compute_errors, estimate_heatmap, format_results_table, write_results_csv};
use starjitter::event_io::{
    align_clocks, read_estimates, read_events, read_log, read_telemetry, write_estimates, write_telemetry,
    AlignParams, ClockAlignment, EstimatesFile, LogEntry, TelemetryColumns,
};
use starjitter::recovery::run_pipeline;
use starjitter::sim::{episode_configs, simulate_sequence, SequenceConfig};
use starjitter::telemetry_queue::{decode_entries, read_snapshot_trace, reconstruct_trajectory, IoModel};
use starjitter::{EstimateFlags, Event, Execution, GroundTruthSample, JitterEstimate, SensorGeometry};
use starjitter::model::GROUND_TRUTH_RATE_HZ;

use crate::args::{AlignArgs, Cli, DecodeArgs, EstimateArgs, EvaluateArgs, SimulateArgs};
use crate::config::{positive, RunConfig};
use crate::files::{in_file, open, OutDir};
use crate::Failure;

/// Settings shared by every subcommand.
pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub seed: Option<u64>,
    pub out: OutDir,
    pub execution: Execution,
    pub geometry: SensorGeometry,
}

impl<'a> Context<'a> {
    pub fn new(cli: &Cli, cfg: &'a RunConfig) -> Result<Self, Failure> {
        Ok(Self {
            cfg,
            seed: cli.seed,
            out: OutDir::create(&cli.out)?,
            execution: if cli.sequential { Execution::Sequential } else { Execution::Parallel },
            geometry: SensorGeometry::default(),
        })
    }
}

pub fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<(), Failure> {
    let mut base = ctx.cfg.sequence.clone();
    if let Some(b) = a.band {
        base.band = b.0;
    }
    if let Some(x) = a.axes {
        base.axes = x;
    }
    if let Some(d) = a.duration {
        base.duration_s = d;
    }
    if let Some(n) = a.stars {
        base.stars = n;
    }
    if let Some(r) = a.noise_rate {
        base.noise_rate = r;
    }
    if let Some(o) = a.offset_us {
        base.piezo_offset_us = o;
    }
    if a.queue_ratio.is_some() {
        base.queue_loss_ratio = a.queue_ratio;
    }
    base.episode20_compat |= a.no_spike;
    if let Some(s) = ctx.seed {
        base.seed = s;
    }
    check_sequence(&base)?;

    let configs = if a.episode { episode_configs(&base, base.seed) } else { vec![base] };
    for c in &configs {
        let out = simulate_sequence(c, ctx.execution)?;
        let files = out.encode()?;
        let name = c.name();
        ctx.out.write_bytes(&format!("{name}_events.bin"), &files.events)?;
        ctx.out.write_bytes(&format!("{name}_telemetry.csv"), &files.telemetry)?;
        ctx.out.write_bytes(&format!("{name}_log.csv"), &files.log)?;
        if let Some(snaps) = &out.snapshots {
            ctx.out.write(&format!("{name}_trace.csv"), |w| starjitter::telemetry_queue::write_snapshot_trace(snaps, w))?;
        }
        ctx.out.write_json(&format!("{name}_config.json"), c)?;
        println!("{name}: seed {}, {} events, {} telemetry samples", c.seed, out.events.len(), out.telemetry.len());
    }
    Ok(())
}

fn check_sequence(c: &SequenceConfig) -> Result<(), Failure> {
    positive("duration", c.duration_s)?;
    if c.duration_s > 3600.0 {
        return Err(Failure::Usage(format!("duration must be at most 3600 s, got {}", c.duration_s)));
    }
    if !(c.noise_rate >= 0.0 && c.noise_rate.is_finite()) {
        return Err(Failure::Usage(format!("noise rate must be a non-negative number, got {}", c.noise_rate)));
    }
    if let Some(r) = c.queue_loss_ratio {
        positive("queue ratio", r)?;
    }
    positive("psf_sigma", c.psf_sigma)?;
    Ok(())
}

#[derive(Default)]
struct FlagCounts {
    no_stars: usize,
    no_support: usize,
    degenerate_fit: usize,
    first_batch: usize,
    moving: usize,
}

impl FlagCounts {
    fn of(est: &[JitterEstimate]) -> Self {
        let mut c = Self::default();
        for e in est {
            c.no_stars += e.flags.contains(EstimateFlags::NO_STARS) as usize;
            c.no_support += e.flags.contains(EstimateFlags::NO_SUPPORT) as usize;
            c.degenerate_fit += e.flags.contains(EstimateFlags::DEGENERATE_FIT) as usize;
            c.first_batch += e.flags.contains(EstimateFlags::FIRST_BATCH) as usize;
            c.moving += (e.dx != 0 || e.dy != 0) as usize;
        }
        c
    }
}

/// Decimal rendering without float noise, e.g. 2500 or 16666.667.
fn decimal(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    format!("{r}")
}

pub fn estimate(ctx: &Context, a: &EstimateArgs) -> Result<(), Failure> {
    let opts = ctx.cfg.pipeline.merged(&a.pipeline);
    let pc = opts.build(ctx.execution)?;
    let stream = in_file(&a.events, read_events(open(&a.events)?, &ctx.geometry))?;
    let est = run_pipeline(&stream.events, &pc, None)?;

    let mut meta: Vec<(String, String)> = vec![
        ("t_batch_us".into(), decimal(pc.t_batch_s * 1e6)),
        ("n_c".into(), pc.n_c.to_string()),
        ("eps_px".into(), pc.eps.to_string()),
        ("min_pts".into(), pc.min_pts.to_string()),
        ("radius_px".into(), pc.radius.to_string()),
        ("grid_radius_px".into(), pc.grid.radius.to_string()),
        ("min_support".into(), pc.min_support.to_string()),
        ("events".into(), stream.events.len().to_string()),
    ];
    if opts.t_batch_ms.is_none() {
        meta.insert(1, ("band".into(), opts.band().to_string()));
    }
    if let Some(name) = a.events.file_name() {
        meta.push(("source".into(), name.to_string_lossy().into_owned()));
    }
    let file = EstimatesFile { meta, estimates: est };
    let name = match &a.output {
        Some(n) => n.clone(),
        None => format!("{}_estimates.csv", stem(&a.events)),
    };
    let path = ctx.out.write(&name, |w| write_estimates(&file, w))?;

    let c = FlagCounts::of(&file.estimates);
    println!(
        "{} batches of {} us; nonzero {}; flags: no_stars {}, no_support {}, degenerate_fit {}, first_batch {}; wrote {}",
        file.estimates.len(),
        decimal(pc.t_batch_s * 1e6),
        c.moving,
        c.no_stars,
        c.no_support,
        c.degenerate_fit,
        c.first_batch,
        path.display()
    );
    Ok(())
}

fn stem(p: &Path) -> String {
    let s = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "events".into());
    s.strip_suffix("_events").map(str::to_string).unwrap_or(s)
}

fn columns(spec: Option<&str>) -> Result<TelemetryColumns, Failure> {
    match spec {
        None => Ok(TelemetryColumns::default()),
        Some(s) => TelemetryColumns::parse(s)
            .ok_or_else(|| Failure::Usage(format!("--columns expects `time,axis1,axis2`, got `{s}`"))),
    }
}

fn read_telemetry_file(path: &Path, spec: Option<&str>) -> Result<Vec<GroundTruthSample>, Failure> {
    let cols = columns(spec)?;
    in_file(path, read_telemetry(open(path)?, &cols))
}

fn read_events_file(ctx: &Context, path: &Path) -> Result<Vec<Event>, Failure> {
    Ok(in_file(path, read_events(open(path)?, &ctx.geometry))?.events)
}

fn read_log_file(path: &Path) -> Result<Vec<LogEntry>, Failure> {
    in_file(path, read_log(open(path)?))
}

fn align_params(ctx: &Context) -> Result<AlignParams, Failure> {
    Ok(AlignParams { geometry: ctx.geometry, ..ctx.cfg.align.build()? })
}

fn run_alignment(ctx: &Context, events: &[Event], telemetry: &[GroundTruthSample]) -> Result<ClockAlignment, Failure> {
    align_clocks(events, telemetry, &align_params(ctx)?).map_err(|e| Failure::Data(format!("align_clocks failed: {e}")))
}

#[derive(Serialize)]
struct Evaluation<'a> {
    report: &'a starjitter::evaluation::ErrorReport,
    offset_us: i64,
    alignment: Option<ClockAlignment>,
    scored_from_us: Option<i64>,
    estimates: usize,
    heatmap_radius: i32,
    heatmap_total: u64,
    heatmap_mass_within_radius: f64,
}

pub fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<(), Failure> {
    if a.heatmap_radius < 0 || a.heatmap_radius > 1000 {
        return Err(Failure::Usage(format!("heatmap radius must be in 0..=1000, got {}", a.heatmap_radius)));
    }
    let file = in_file(&a.estimates, read_estimates(open(&a.estimates)?))?;
    let telemetry = read_telemetry_file(&a.telemetry, a.columns.as_deref())?;

    let alignment = match &a.events {
        Some(p) => Some(run_alignment(ctx, &read_events_file(ctx, p)?, &telemetry)?),
        None => None,
    };
    let offset = match (a.offset_us, alignment) {
        (Some(o), _) => o,
        (None, Some(al)) => al.offset_us,
        (None, None) => {
            log::warn!("no --events or --offset-us given; assuming the clocks agree");
            0
        }
    };
    let to_cam = |t: i64| t - offset;

    let from = match (a.from_us, &a.log) {
        (Some(t), _) => Some(t),
        (None, Some(p)) => {
            let log = read_log_file(p)?;
            let at = |label: &str| log.iter().find(|e| e.label == label).map(|e| to_cam(e.t_us));
            at("spike_command").map(|t| t + 1_000_000).or_else(|| at("homing_complete"))
        }
        (None, None) => None,
    };

    let truth: Vec<GroundTruthSample> = telemetry
        .iter()
        .map(|g| GroundTruthSample::new(to_cam(g.t), g.x_mm, g.y_mm))
        .filter(|g| from.is_none_or(|f| g.t >= f))
        .collect();
    let times: Vec<i64> = truth.iter().map(|g| g.t).collect();
    let aggs = aggregate_estimates(&file.estimates, &times)?;
    let mut report = compute_errors(&aggs, &truth, &ctx.geometry)?;
    report.band = a.band.map(|b| b.to_string()).or_else(|| file.meta_value("band").map(str::to_string));
    report.axes = a.axes.map(|x| x.to_string());

    let heat = estimate_heatmap(&file.estimates, a.heatmap_radius);
    let table = format_results_table(std::slice::from_ref(&report));
    ctx.out.write("results.csv", |w| write_results_csv(std::slice::from_ref(&report), w))?;
    ctx.out.write_bytes("results.txt", table.as_bytes())?;
    ctx.out.write("heatmap.csv", |w| heat.write_csv(w))?;
    ctx.out.write_json(
        "evaluation.json",
        &Evaluation {
            report: &report,
            offset_us: offset,
            alignment,
            scored_from_us: from,
            estimates: file.estimates.len(),
            heatmap_radius: a.heatmap_radius,
            heatmap_total: heat.total(),
            heatmap_mass_within_radius: heat.mass_within_disc(a.heatmap_radius as f64),
        },
    )?;
    print!("{table}");
    println!("{} intervals scored, clock offset {offset} us", report.n_intervals);
    Ok(())
}

pub fn decode_telemetry(ctx: &Context, a: &DecodeArgs) -> Result<(), Failure> {
    let io = IoModel { t0_us: a.t0_us, ..IoModel::default() };
    let delay = match a.delay_us {
        Some(d) => d,
        None => 1e6 / GROUND_TRUTH_RATE_HZ - io.phase_duration_us(0.0),
    };
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(Failure::Usage(format!("delay must be a non-negative number, got {delay}")));
    }
    let snaps = in_file(&a.trace, read_snapshot_trace(open(&a.trace)?))?;
    let entries = decode_entries(&snaps).len();
    let samples = reconstruct_trajectory(&snaps, delay, &io);
    let path = ctx.out.write(&a.output, |w| write_telemetry(&samples, w))?;
    println!(
        "{} register reads, {entries} distinct entries, {} samples; wrote {}",
        snaps.len(),
        samples.len(),
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct AlignReport {
    #[serde(flatten)]
    alignment: ClockAlignment,
    /// Spike command from the log mapped to the camera clock, minus the detected burst.
    spike_command_residual_us: Option<i64>,
}

pub fn align(ctx: &Context, a: &AlignArgs) -> Result<(), Failure> {
    let telemetry = read_telemetry_file(&a.telemetry, a.columns.as_deref())?;
    let events = read_events_file(ctx, &a.events)?;
    let alignment = run_alignment(ctx, &events, &telemetry)?;
    let residual = match &a.log {
        Some(p) => read_log_file(p)?
            .iter()
            .find(|e| e.label == "spike_command")
            .map(|e| alignment.piezo_to_cam(e.t_us) - alignment.spike_t_cam as i64),
        None => None,
    };
    ctx.out.write_json(&a.output, &AlignReport { alignment, spike_command_residual_us: residual })?;
    println!(
        "offset {} us (actuator minus camera), spike at {} us camera / {} us actuator, confidence {:.1}",
        alignment.offset_us, alignment.spike_t_cam, alignment.spike_t_piezo, alignment.confidence
    );
    Ok(())
}
