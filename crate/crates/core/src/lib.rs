//! Context-adaptive multi-object tracking.
//!
//! Offline, annotated sequences are cut into stable-context segments, each
//! described by six feature code-books; boosted descriptor weights are learned
//! per segment and the segments are grouped by quality-threshold clustering
//! into a learned database. Online, a controller measures the context of every
//! chunk of frames and hot-swaps the appearance tracker's descriptor weights
//! from the closest learned cluster.

pub mod error;
pub mod scene;
pub mod seqfile;
pub mod trackfile;
pub mod features;
pub mod codebook;
pub mod segmentation;
pub mod assignment;
pub mod tracker;
pub mod metrics;
pub mod sim;
pub mod optimizer;
pub mod clustering;
pub mod controller;
pub mod config;
pub mod pipeline;

pub use error::{Error, Result};
