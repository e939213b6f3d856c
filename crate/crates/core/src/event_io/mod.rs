//! Readers and writers for the three per-sequence file families (event
//! streams, actuator telemetry, acquisition logs), the estimate CSV, and
//! camera/actuator clock alignment from the synchronization spike.

mod align;
mod binary;
mod text;

pub use align::{align_clocks, AlignParams, ClockAlignment};
pub use binary::{
    read_events, write_events, write_events_csv, EventStream, EVENT_HEADER_LEN, EVENT_MAGIC, EVENT_RECORD_LEN,
};
pub use text::{
    read_estimates, read_log, read_telemetry, write_estimates, write_log, write_telemetry, EstimatesFile, LogEntry,
    TelemetryColumns,
};
