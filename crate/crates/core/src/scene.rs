//! Value types shared by the whole pipeline: boxes, appearance descriptors,
//! detections, annotations, trajectories and sequences.

use serde::{Deserialize, Serialize};

/// Default number of color-histogram bins.
pub const DEFAULT_BINS: usize = 64;
/// Default number of dominant colors kept per object.
pub const DEFAULT_DOMINANT_K: usize = 3;

/// Axis-aligned box in pixels, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x.is_finite() && self.y.is_finite()
    }

    /// Height over width.
    pub fn shape_ratio(&self) -> f64 {
        self.h / self.w
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    /// Clips the box to `[0, width] x [0, height]`. Returns `None` when nothing
    /// of the box remains inside the frame.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<BBox> {
        let x0 = self.x.clamp(0.0, width);
        let y0 = self.y.clamp(0.0, height);
        let x1 = self.right().clamp(0.0, width);
        let y1 = self.bottom().clamp(0.0, height);
        let b = BBox::new(x0, y0, x1 - x0, y1 - y0);
        b.is_valid().then_some(b)
    }
}

/// Area of the overlap of two boxes, zero when they are disjoint.
pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        0.0
    } else {
        iw * ih
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Appearance descriptors carried by a detection.
///
/// `covariance` holds the upper triangle of a symmetric 3x3 color covariance
/// in row order: `[c00, c01, c02, c11, c12, c22]`. `dominant` lists
/// `(bin, weight)` pairs by descending weight.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub histogram: Vec<f64>,
    pub covariance: [f64; 6],
    pub dominant: Vec<(usize, f64)>,
    pub contrast: f64,
}

impl Appearance {
    pub fn covariance_matrix(&self) -> [[f64; 3]; 3] {
        let c = &self.covariance;
        [[c[0], c[1], c[2]], [c[1], c[3], c[4]], [c[2], c[4], c[5]]]
    }

    /// Checks the descriptor invariants against the expected histogram size
    /// and dominant-color count.
    pub fn validate(&self, bins: usize, dominant_k: usize) -> Result<(), String> {
        if self.histogram.len() != bins {
            return Err(format!(
                "histogram has {} bins, expected {bins}",
                self.histogram.len()
            ));
        }
        if self.histogram.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err("histogram entries must be finite and >= 0".into());
        }
        let sum: f64 = self.histogram.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("histogram sums to {sum}, expected 1"));
        }
        if self.covariance.iter().any(|v| !v.is_finite()) {
            return Err("covariance must be finite".into());
        }
        if self.dominant.len() > dominant_k {
            return Err(format!(
                "{} dominant colors, at most {dominant_k} allowed",
                self.dominant.len()
            ));
        }
        if self.dominant.windows(2).any(|p| p[0].1 < p[1].1) {
            return Err("dominant color weights must be descending".into());
        }
        if self.dominant.iter().any(|&(bin, w)| bin >= bins || !(w >= 0.0)) {
            return Err("dominant color bin out of range or negative weight".into());
        }
        let dsum: f64 = self.dominant.iter().map(|d| d.1).sum();
        if dsum > 1.0 + 1e-9 {
            return Err(format!("dominant weights sum to {dsum} > 1"));
        }
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(format!("contrast {} outside [0, 1]", self.contrast));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: usize,
    pub id: u64,
    pub bbox: BBox,
    pub appearance: Appearance,
}

/// A detection with its ground-truth identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub detection: Detection,
    pub object_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub track_id: u64,
    pub observations: Vec<Detection>,
}

impl Trajectory {
    pub fn first_frame(&self) -> Option<usize> {
        self.observations.first().map(|d| d.frame)
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.observations.last().map(|d| d.frame)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Per-frame detections and (optionally) annotations for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frame_width: f64,
    pub frame_height: f64,
    pub bins: usize,
    pub dominant_k: usize,
    pub frames: Vec<Vec<Detection>>,
    pub annotations: Option<Vec<Vec<AnnotatedObject>>>,
}

impl Sequence {
    pub fn new(frame_width: f64, frame_height: f64, frame_count: usize) -> Self {
        Self {
            frame_width,
            frame_height,
            bins: DEFAULT_BINS,
            dominant_k: DEFAULT_DOMINANT_K,
            frames: vec![Vec::new(); frame_count],
            annotations: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_area(&self) -> f64 {
        self.frame_width * self.frame_height
    }

    pub fn has_annotations(&self) -> bool {
        self.annotations.is_some()
    }

    /// Annotations seen as detections (how the offline phase consumes them).
    pub fn annotations_as_detections(&self) -> Option<Vec<Vec<Detection>>> {
        self.annotations.as_ref().map(|frames| {
            frames
                .iter()
                .map(|objs| objs.iter().map(|o| o.detection.clone()).collect())
                .collect()
        })
    }

    /// Ground-truth trajectories over `[start, end]`, grouped by object id
    /// and ordered by id.
    pub fn ground_truth(&self, start: usize, end: usize) -> Vec<Trajectory> {
        let Some(ann) = &self.annotations else {
            return Vec::new();
        };
        let mut by_id: std::collections::BTreeMap<u64, Vec<Detection>> = Default::default();
        for frame in ann.iter().take(end.saturating_add(1)).skip(start) {
            for obj in frame {
                by_id
                    .entry(obj.object_id)
                    .or_default()
                    .push(obj.detection.clone());
            }
        }
        by_id
            .into_iter()
            .map(|(track_id, observations)| Trajectory {
                track_id,
                observations,
            })
            .collect()
    }
}
