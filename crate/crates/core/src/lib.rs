//! Adaptive multi-group row-anchor track detection.
//!
//! The crate is split along the pipeline:
//!
//! * [`anchors`] builds the row-anchor groups (equidistant and progressively
//!   spaced) and picks the ground-truth group for an image.
//! * [`codec`] turns track polylines into per-row cell targets and turns
//!   network logits back into polylines.
//! * [`nnet`] is a small two-head convolutional model with hand-written
//!   reverse-mode gradients, Adam and the staged training schedule.
//! * [`synth`] renders a deterministic synthetic rail-scene corpus.
//! * [`eval`] holds the IoU-based F1 metrics, ACC and the latency bench.
//! * [`io`] reads and writes every on-disk artifact.

pub mod anchors;
pub mod codec;
pub mod error;
pub mod eval;
pub mod io;
pub mod nnet;
pub mod synth;

pub use anchors::{AnchorGenSpec, AnchorGroup, AnchorSet, Spacing};
pub use codec::{DecodedTracks, GridTarget, Point, Polyline, Prediction};
pub use error::{Error, Result};
pub use eval::{EvalConfig, MatchMode, MatchResult};
pub use nnet::{LossBreakdown, ModelConfig, ModelParams, TrainSchedule};
