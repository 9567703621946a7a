//! The six per-frame contextual features: object density, occlusion level,
//! contrast mean and spread, 2D area mean and spread.
//!
//! Areas are expressed as a fraction of the frame area. Contrast and area
//! statistics are absent on frames without objects.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{intersection_area, Appearance, BBox, Detection, Sequence};

pub const FEATURE_COUNT: usize = 6;

/// Feature names in their fixed order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "density",
    "occlusion",
    "contrast",
    "contrastStd",
    "area",
    "areaStd",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextSample {
    pub frame: usize,
    pub density: f64,
    pub occlusion: f64,
    pub contrast_mean: Option<f64>,
    pub contrast_std: Option<f64>,
    pub area_mean: Option<f64>,
    pub area_std: Option<f64>,
    pub object_count: usize,
}

impl ContextSample {
    /// Feature `k` (0-based, in [`FEATURE_NAMES`] order).
    pub fn feature(&self, k: usize) -> Option<f64> {
        match k {
            0 => Some(self.density),
            1 => Some(self.occlusion),
            2 => self.contrast_mean,
            3 => self.contrast_std,
            4 => self.area_mean,
            5 => self.area_std,
            _ => panic!("feature index {k} out of range"),
        }
    }

    pub fn features(&self) -> [Option<f64>; FEATURE_COUNT] {
        std::array::from_fn(|k| self.feature(k))
    }
}

/// Consecutive per-frame samples; the unit the code-book distance works on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextChunk {
    pub start_frame: usize,
    pub samples: Vec<ContextSample>,
}

impl ContextChunk {
    pub fn new(start_frame: usize, samples: Vec<ContextSample>) -> Self {
        Self {
            start_frame,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Inclusive last frame. Equal to `start_frame - 1` for an empty chunk.
    pub fn end_frame(&self) -> usize {
        (self.start_frame + self.samples.len()).saturating_sub(1)
    }

    /// Present values of feature `k`, in frame order.
    pub fn values(&self, k: usize) -> Vec<f64> {
        self.samples.iter().filter_map(|s| s.feature(k)).collect()
    }
}

/// Which object list feeds the features: annotations offline, detections online.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    Annotations,
    Detections,
}

pub fn density(boxes: &[BBox], frame_area: f64) -> f64 {
    let total: f64 = boxes.iter().map(BBox::area).sum();
    (total / frame_area).min(1.0)
}

/// Summed pairwise overlap over summed object area; regions covered by three
/// or more objects are counted once per overlapping pair.
pub fn occlusion_level(boxes: &[BBox]) -> f64 {
    if boxes.len() < 2 {
        return 0.0;
    }
    let mut overlap = 0.0;
    for (i, a) in boxes.iter().enumerate() {
        for b in &boxes[i + 1..] {
            overlap += intersection_area(a, b);
        }
    }
    let total: f64 = boxes.iter().map(BBox::area).sum();
    (overlap / total).min(1.0)
}

/// Mean and population standard deviation.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64)> {
    let n = values.clone().count();
    if n == 0 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Some((mean, var.sqrt()))
}

pub fn contrast_stats(objects: &[&Appearance]) -> Option<(f64, f64)> {
    mean_std(objects.iter().map(|a| a.contrast))
}

pub fn area_stats(boxes: &[BBox], frame_area: f64) -> Option<(f64, f64)> {
    mean_std(boxes.iter().map(|b| b.area() / frame_area))
}

/// Context sample for one frame's objects.
pub fn frame_sample(frame: usize, objects: &[&Detection], frame_area: f64) -> ContextSample {
    let boxes: Vec<BBox> = objects.iter().map(|d| d.bbox).collect();
    let appearances: Vec<&Appearance> = objects.iter().map(|d| &d.appearance).collect();
    let contrast = contrast_stats(&appearances);
    let area = area_stats(&boxes, frame_area);
    ContextSample {
        frame,
        density: density(&boxes, frame_area),
        occlusion: occlusion_level(&boxes),
        contrast_mean: contrast.map(|c| c.0),
        contrast_std: contrast.map(|c| c.1),
        area_mean: area.map(|a| a.0),
        area_std: area.map(|a| a.1),
        object_count: objects.len(),
    }
}

/// Samples for frames `start .. start + len`.
pub fn extract_context(
    seq: &Sequence,
    source: FeatureSource,
    start: usize,
    len: usize,
) -> Result<ContextChunk> {
    let end = start.checked_add(len).filter(|&e| e <= seq.len()).ok_or(
        Error::RangeOutOfBounds {
            start,
            end: start.saturating_add(len),
            len: seq.len(),
        },
    )?;
    let area = seq.frame_area();
    let samples = match source {
        FeatureSource::Detections => (start..end)
            .map(|f| {
                let objs: Vec<&Detection> = seq.frames[f].iter().collect();
                frame_sample(f, &objs, area)
            })
            .collect(),
        FeatureSource::Annotations => {
            let ann = seq.annotations.as_ref().ok_or(Error::MissingAnnotations)?;
            (start..end)
                .map(|f| {
                    let objs: Vec<&Detection> = ann[f].iter().map(|a| &a.detection).collect();
                    frame_sample(f, &objs, area)
                })
                .collect()
        }
    };
    Ok(ContextChunk::new(start, samples))
}
