//! Depth-aware tracking-by-detection: box geometry, a constant-velocity Kalman
//! filter, fused IoU/depth association with a direction prior, an
//! observation-centric track lifecycle, grounding rewards, HOTA evaluation,
//! file formats and a seeded scenario generator.

pub mod association;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod lap;
pub mod metrics;
pub mod motion;
pub mod rewards;
pub mod simulator;
pub mod sweep;
pub mod tracker;

pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{iou, BBox, DepthMap, SimilarityParams};
pub use metrics::{evaluate, MetricBundle, SequenceGT};
pub use tracker::{run_sequence, Detection, FrameResult, Tracker, TrackerParams};
