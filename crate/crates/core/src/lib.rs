//! Event-camera jitter estimation for star-observation rigs.
//!
//! The crate is organized around one pipeline and the tooling needed to
//! check it against known truth:
//!
//! - [`model`]: shared types, stage/sensor calibration and band constants.
//! - [`event_io`]: event containers, telemetry and log files, clock alignment.
//! - [`telemetry_queue`]: the controller's nine-register circular queue and its decoder.
//! - [`sim`]: star field, trapezoidal jitter trajectories, event rendering, full sequences.
//! - [`recovery`]: batching, windowing, DBSCAN, line fits, hypothesis search.
//! - [`evaluation`]: aggregation to the ground-truth rate, RMSE reports and heatmaps.
//!
//! Data-parallel loops (per-star rendering, per-batch estimation) run on
//! rayon behind the default `parallel` feature; see [`Execution`].

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod event_io;
pub mod exec;
pub mod model;
pub mod recovery;
pub mod sim;
pub mod telemetry_queue;

pub use error::{DomainError, Error, Location, ParseError, Result};
pub use exec::Execution;
pub use model::{
    batch_duration, frequency_of_motion, mm_to_pixels, pixels_to_mm, BandName, EstimateFlags, Event,
    FrequencyBand, GroundTruthSample, JitterEstimate, Micros, MotionAxes, PeriodClock, Polarity, SensorGeometry,
};
