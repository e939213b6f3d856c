//! Nine-register circular queue used by the stage controller to publish
//! positions, and the host-side decoder.
//!
//! Register layout (1-based): r1 LoopCount, then four (position, StepCount)
//! slots: (r2, r3) axis 1, (r4, r5) axis 2, (r6, r7) axis 1, (r8, r9) axis 2.
//! One loop iteration writes registers 1–5 after the outbound move and
//! registers 6–9 after the return move.

use std::io::{Read, Write};

use crate::error::{Error, ParseError, Result};
use crate::model::{GroundTruthSample, Micros};

pub const REGISTER_COUNT: usize = 9;
/// Position slots in the queue.
pub const QUEUE_SLOTS: usize = 4;
/// Mean completion time of one SET command.
pub const DEFAULT_SET_LATENCY_US: f64 = 15_000.0;

/// One atomic read of all nine registers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegisterSnapshot {
    pub values: [f64; REGISTER_COUNT],
    pub read_t: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueueAxis {
    Axis1,
    Axis2,
}

/// One decoded position reading. Each StepCount tags a single axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueEntry {
    pub loop_count: u64,
    pub step_count: u64,
    pub axis: QueueAxis,
    pub position_mm: f64,
    /// Host read time of the first snapshot that carried this entry.
    pub read_t: Micros,
}

impl QueueEntry {
    /// Half-iteration (phase) the entry belongs to, starting at 1.
    pub fn phase(&self) -> u64 {
        self.step_count.div_ceil(2)
    }
}

fn slot_axis(slot: usize) -> QueueAxis {
    if slot.is_multiple_of(2) {
        QueueAxis::Axis1
    } else {
        QueueAxis::Axis2
    }
}

/// Controller-side writer state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueueWriter {
    loop_count: u64,
    step_count: u64,
    axis1: f64,
    axis2: f64,
    registers: [f64; REGISTER_COUNT],
    /// True when the next phase is the return half of an iteration.
    second_half: bool,
}

impl QueueWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn loop_count(&self) -> u64 {
        self.loop_count
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn registers(&self) -> [f64; REGISTER_COUNT] {
        self.registers
    }

    pub fn position(&self) -> (f64, f64) {
        (self.axis1, self.axis2)
    }

    /// Publishes the current positions as the next half of an iteration.
    /// The outbound half writes r1–r5, the return half r6–r9 and then
    /// advances LoopCount.
    pub fn write_phase(&mut self, axis1: f64, axis2: f64) {
        self.axis1 = axis1;
        self.axis2 = axis2;
        let r = &mut self.registers;
        if !self.second_half {
            r[0] = self.loop_count as f64;
            r[1] = axis1;
            self.step_count += 1;
            r[2] = self.step_count as f64;
            r[3] = axis2;
            self.step_count += 1;
            r[4] = self.step_count as f64;
        } else {
            r[5] = axis1;
            self.step_count += 1;
            r[6] = self.step_count as f64;
            r[7] = axis2;
            self.step_count += 1;
            r[8] = self.step_count as f64;
            self.loop_count += 1;
        }
        self.second_half = !self.second_half;
    }

    /// One loop body of the vibration macro: move both axes by
    /// `+amplitude`, publish, move back by `amplitude`, publish. The delay
    /// only affects timing, which the writer does not track.
    pub fn macro_step(&mut self, amplitude: f64, delay_us: f64) -> Result<[f64; REGISTER_COUNT]> {
        if !(amplitude > 0.0) || !(delay_us > 0.0) {
            return Err(Error::Contract("amplitude and delay must be positive".into()));
        }
        if self.second_half {
            return Err(Error::Contract("macro_step called mid-iteration".into()));
        }
        let (a1, a2) = (self.axis1 + amplitude, self.axis2 + amplitude);
        self.write_phase(a1, a2);
        self.write_phase(a1 - amplitude, a2 - amplitude);
        Ok(self.registers)
    }
}

fn as_step(v: f64) -> Option<u64> {
    (v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v < (1u64 << 53) as f64).then_some(v as u64)
}

/// Valid entries of one snapshot, oldest first.
///
/// Starting from the slot with the largest StepCount, the run is extended
/// backwards around the ring while each preceding slot holds exactly one
/// less. Slots outside that run are stale or torn and are dropped.
pub fn validate_snapshot(s: &RegisterSnapshot) -> Vec<QueueEntry> {
    let steps: Vec<Option<u64>> = (0..QUEUE_SLOTS).map(|k| as_step(s.values[2 + 2 * k])).collect();
    let Some(head) = (0..QUEUE_SLOTS).filter(|&k| steps[k].is_some()).max_by_key(|&k| steps[k]) else {
        return Vec::new();
    };
    let mut run = vec![head];
    let mut cur = steps[head].unwrap();
    while run.len() < QUEUE_SLOTS {
        let prev = (run[run.len() - 1] + QUEUE_SLOTS - 1) % QUEUE_SLOTS;
        match steps[prev] {
            Some(p) if p + 1 == cur => {
                run.push(prev);
                cur = p;
            }
            _ => break,
        }
    }
    run.reverse();
    run.into_iter()
        .map(|k| {
            let step = steps[k].unwrap();
            QueueEntry {
                loop_count: (step - 1) / 4,
                step_count: step,
                axis: slot_axis(k),
                position_mm: s.values[1 + 2 * k],
                read_t: s.read_t,
            }
        })
        .collect()
}

/// All distinct entries carried by `snapshots`, ordered by StepCount.
pub fn decode_entries(snapshots: &[RegisterSnapshot]) -> Vec<QueueEntry> {
    let mut out: Vec<QueueEntry> = snapshots.iter().flat_map(validate_snapshot).collect();
    // Stable sort keeps the first read of each entry in front.
    out.sort_by_key(|e| e.step_count);
    out.dedup_by_key(|e| e.step_count);
    out
}

/// Timing of the controller loop as seen by the host.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoModel {
    /// Host time at which StepCount 0 would have been written.
    pub t0_us: i64,
    pub set_latency_us: f64,
    /// SET commands issued per half-iteration.
    pub moves_per_phase: u32,
}

impl Default for IoModel {
    fn default() -> Self {
        Self { t0_us: 0, set_latency_us: DEFAULT_SET_LATENCY_US, moves_per_phase: 2 }
    }
}

impl IoModel {
    pub fn phase_duration_us(&self, delay_us: f64) -> f64 {
        delay_us + self.moves_per_phase as f64 * self.set_latency_us
    }

    pub fn phase_time(&self, phase: u64, delay_us: f64) -> i64 {
        self.t0_us + (phase as f64 * self.phase_duration_us(delay_us)).round() as i64
    }
}

/// Reconstructs the stage trajectory, one sample per half-iteration that
/// carried at least one reading. An axis missing from a phase keeps its
/// last decoded value (zero before the first reading).
pub fn reconstruct_trajectory(snapshots: &[RegisterSnapshot], delay_us: f64, io: &IoModel) -> Vec<GroundTruthSample> {
    let entries = decode_entries(snapshots);
    let mut out: Vec<GroundTruthSample> = Vec::new();
    let (mut x, mut y) = (0.0, 0.0);
    let mut i = 0;
    while i < entries.len() {
        let phase = entries[i].phase();
        while i < entries.len() && entries[i].phase() == phase {
            match entries[i].axis {
                QueueAxis::Axis1 => x = entries[i].position_mm,
                QueueAxis::Axis2 => y = entries[i].position_mm,
            }
            i += 1;
        }
        out.push(GroundTruthSample { t: io.phase_time(phase, delay_us), x_mm: x, y_mm: y });
    }
    out
}

/// Deterministic writer/reader co-simulation. The writer publishes one
/// half-iteration every `phase_us`; the reader takes a snapshot at each
/// time in `read_times` (a write at the same instant lands first).
pub fn cosimulate<F>(phases: &[(f64, f64)], phase_us: f64, read_times: &[f64], mut on_phase: F) -> Vec<RegisterSnapshot>
where
    F: FnMut(u64, &QueueWriter),
{
    let mut w = QueueWriter::new();
    let mut next = 0usize;
    let mut out = Vec::with_capacity(read_times.len());
    for &rt in read_times {
        while next < phases.len() && (next + 1) as f64 * phase_us <= rt {
            w.write_phase(phases[next].0, phases[next].1);
            next += 1;
            on_phase(next as u64, &w);
        }
        out.push(RegisterSnapshot { values: w.registers(), read_t: rt.round() as Micros });
    }
    out
}

/// Reader times for a write:read ratio counted in register writes per
/// snapshot. Nine registers are written per iteration.
pub fn read_schedule(iterations: u64, phase_us: f64, ratio: f64) -> Vec<f64> {
    let period = ratio / REGISTER_COUNT as f64 * 2.0 * phase_us;
    let end = (2 * iterations) as f64 * phase_us + period;
    let n = (end / period).ceil() as usize;
    (1..=n).map(|k| k as f64 * period).collect()
}

const TRACE_HEADER: [&str; 10] = ["read_t_us", "r1", "r2", "r3", "r4", "r5", "r6", "r7", "r8", "r9"];

pub fn write_snapshot_trace<W: Write>(snapshots: &[RegisterSnapshot], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for s in snapshots {
        let mut rec = vec![s.read_t.to_string()];
        rec.extend(s.values.iter().map(|v| format!("{v}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot_trace<R: Read>(source: R) -> Result<Vec<RegisterSnapshot>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(source);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 1;
        let rec = rec.map_err(|e| ParseError::at_line(line, e.to_string()))?;
        if i == 0 {
            if rec.iter().ne(TRACE_HEADER.iter().copied()) {
                return Err(ParseError::at_line(1, "expected header read_t_us,r1..r9").into());
            }
            continue;
        }
        if rec.len() != REGISTER_COUNT + 1 {
            return Err(ParseError::at_line(line, format!("expected 10 fields, got {}", rec.len())).into());
        }
        let read_t = rec[0].parse().map_err(|_| ParseError::at_line(line, "bad read_t_us"))?;
        let mut values = [0.0; REGISTER_COUNT];
        for (k, v) in values.iter_mut().enumerate() {
            *v = rec[k + 1].parse().map_err(|_| ParseError::at_line(line, format!("bad r{}", k + 1)))?;
        }
        out.push(RegisterSnapshot { values, read_t });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
