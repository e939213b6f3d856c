use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use starjitter::recovery::{dbscan, run_pipeline, PipelineConfig};
use starjitter::sim::{
    generate_star_field, generate_trajectory, render_events, simulate_sequence, NoiseModel, ProtocolParams,
    RenderParams, SequenceConfig,
};
use starjitter::{BandName, Execution, FrequencyBand, MotionAxes, SensorGeometry};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    for band in [BandName::Slow, BandName::Fast] {
        let cfg = SequenceConfig { band: Some(band), axes: MotionAxes::BothAxes, duration_s: 12.0, seed: 1, ..SequenceConfig::default() };
        let out = simulate_sequence(&cfg, Execution::Parallel).unwrap();
        g.throughput(Throughput::Elements(out.events.len() as u64));
        for (name, execution) in MODES {
            let pc = PipelineConfig { execution, ..PipelineConfig::for_band(&band.band()) };
            g.bench_with_input(BenchmarkId::new(name, band.as_str()), &out.events, |b, ev| {
                b.iter(|| run_pipeline(ev, &pc, None).unwrap())
            });
        }
    }
    g.finish();
}

fn render(c: &mut Criterion) {
    let geom = SensorGeometry::default();
    let traj =
        generate_trajectory(Some(&FrequencyBand::MEDIUM), MotionAxes::BothAxes, 12.0, 3, &ProtocolParams::default())
            .unwrap();
    let stars = generate_star_field(12, &geom, 1.0, 30.0, 50.0, 4);
    let noise = NoiseModel { background_rate: 0.002, refractory_us: 500 };
    let mut g = c.benchmark_group("render");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    for (name, execution) in MODES {
        let params = RenderParams { execution, ..RenderParams::default() };
        g.bench_function(name, |b| b.iter(|| render_events(&stars, &traj, &geom, &noise, &params, 5)));
    }
    g.finish();
}

fn clustering(c: &mut Criterion) {
    let cfg = SequenceConfig { band: Some(BandName::Fast), duration_s: 11.0, seed: 2, ..SequenceConfig::default() };
    let out = simulate_sequence(&cfg, Execution::Parallel).unwrap();
    // One 100 ms window from the jitter phase.
    let lo = out.events.partition_point(|e| e.t < 10_800_000);
    let hi = out.events.partition_point(|e| e.t < 10_900_000);
    let pts: Vec<(i32, i32)> = out.events[lo..hi].iter().map(|e| e.pixel()).collect();
    let mut g = c.benchmark_group("dbscan");
    g.throughput(Throughput::Elements(pts.len() as u64));
    g.bench_function("window_100ms", |b| b.iter(|| dbscan(&pts, 3.0, 5)));
    g.finish();
}

criterion_group!(benches, pipeline, render, clustering);
criterion_main!(benches);
