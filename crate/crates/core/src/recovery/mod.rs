//! Batch-wise jitter recovery: slice the stream into fixed batches, cluster
//! a window of recent batches, fit each star's XT/YT lines, take the
//! current and previous batch events near the fitted centroid, and pick
//! the integer displacement that best maps one onto the other.

mod batch;
pub mod dbscan;
mod fit;
mod pipeline;
mod search;

pub use batch::{batch_stream, BatchWindow, EventBatch};
pub use dbscan::{dbscan, Clustering, Label};
pub use fit::{estimate_centroid, fit_cluster_lines, fit_line, ClusterFit, LineFit, StarCentroid};
pub use pipeline::{cluster_events, estimate_batch, run_pipeline, Cluster, PipelineConfig, StarEstimate};
pub use search::{extract_support, search_jitter, search_jitter_with_chance, Hypothesis, HypothesisGrid, SupportSet};
