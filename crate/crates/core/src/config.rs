//! Run configuration, loadable from TOML. Every field has a default; a config
//! file only needs the keys it overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{ApplyMode, ControllerParams};
use crate::error::{Error, Result};
use crate::optimizer::{LinkSampleParams, OptimizerConfig};
use crate::scene::{DEFAULT_BINS, DEFAULT_DOMINANT_K};
use crate::segmentation::SegmentationParams;
use crate::tracker::{TrackerParams, UNIFORM_WEIGHTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Config {
    /// Context distance threshold for segmentation, clustering and matching.
    pub th1: f64,
    /// Code-word matching threshold.
    pub eps: f64,
    /// Frames per context chunk.
    pub chunk_len: usize,
    pub link_threshold: f64,
    pub temporal_window: usize,
    pub boost_rounds: usize,
    /// Minimum MT ratio for learned weights to count as satisfactory.
    pub quality_threshold: f64,
    pub neg_ratio: f64,
    pub iou_threshold: f64,
    pub bins: usize,
    pub dominant_k: usize,
    pub seed: u64,
    pub apply_mode: ApplyMode,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            th1: 0.5,
            eps: 0.5,
            chunk_len: 50,
            link_threshold: 0.5,
            temporal_window: 10,
            boost_rounds: 20,
            quality_threshold: 0.7,
            neg_ratio: 3.0,
            iou_threshold: 0.5,
            bins: DEFAULT_BINS,
            dominant_k: DEFAULT_DOMINANT_K,
            seed: 0,
            apply_mode: ApplyMode::Prospective,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.th1 > 0.0 && self.th1 <= 1.0) {
            return bad("th1 must lie in (0, 1]");
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad("eps must lie in (0, 1]");
        }
        if self.chunk_len == 0 {
            return bad("chunk-len must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.quality_threshold) {
            return bad("quality-threshold must lie in [0, 1]");
        }
        if !(self.neg_ratio > 0.0) {
            return bad("neg-ratio must be > 0");
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return bad("iou-threshold must lie in (0, 1]");
        }
        if self.bins == 0 || self.dominant_k == 0 || self.dominant_k > self.bins {
            return bad("need bins >= dominant-k >= 1");
        }
        self.tracker().validate()
    }

    /// Short hex digest of the canonical serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config is always serializable");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn segmentation(&self) -> SegmentationParams {
        SegmentationParams {
            part_len: self.chunk_len,
            th1: self.th1,
            eps: self.eps,
        }
    }

    pub fn tracker(&self) -> TrackerParams {
        TrackerParams {
            weights: UNIFORM_WEIGHTS,
            link_threshold: self.link_threshold,
            temporal_window: self.temporal_window,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            samples: LinkSampleParams {
                temporal_window: self.temporal_window,
                neg_ratio: self.neg_ratio,
                seed: self.seed,
            },
            rounds: self.boost_rounds,
            quality_threshold: self.quality_threshold,
            tracker: self.tracker(),
            iou_threshold: self.iou_threshold,
        }
    }

    pub fn controller(&self) -> ControllerParams {
        ControllerParams {
            th1: self.th1,
            eps: self.eps,
            chunk_len: self.chunk_len,
            mode: self.apply_mode,
        }
    }
}
