//! Appearance tracker driven by five descriptor weights.
//!
//! Detections are linked frame by frame to active tracks by optimal
//! assignment on a weighted sum of five similarities: 2D area, shape ratio,
//! color histogram, color covariance and dominant color. A track that goes
//! unmatched for more than the temporal window is closed.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::scene::{Appearance, Detection, Trajectory};

pub const DESCRIPTOR_COUNT: usize = 5;
pub const DESCRIPTOR_NAMES: [&str; DESCRIPTOR_COUNT] =
    ["area", "shapeRatio", "colorHistogram", "colorCovariance", "dominantColor"];

/// Ridge added to covariance matrices before comparing them.
const COVARIANCE_RIDGE: f64 = 1e-6;
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

pub type Weights = [f64; DESCRIPTOR_COUNT];

pub const UNIFORM_WEIGHTS: Weights = [0.2; DESCRIPTOR_COUNT];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrackerParams {
    pub weights: Weights,
    pub link_threshold: f64,
    pub temporal_window: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            weights: UNIFORM_WEIGHTS,
            link_threshold: 0.5,
            temporal_window: 10,
        }
    }
}

impl TrackerParams {
    pub fn with_weights(self, weights: Weights) -> Self {
        Self { weights, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParams(format!(
                "descriptor weights must be non-negative, got {:?}",
                self.weights
            )));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidParams(format!(
                "descriptor weights sum to {sum}, expected 1; divide each weight by {sum} to normalize"
            )));
        }
        if !(0.0..=1.0).contains(&self.link_threshold) {
            return Err(Error::InvalidParams(format!(
                "link threshold {} outside [0, 1]",
                self.link_threshold
            )));
        }
        if self.temporal_window == 0 {
            return Err(Error::InvalidParams("temporal window must be >= 1 frame".into()));
        }
        Ok(())
    }
}

/// Scales weights to sum to one. All-zero input gives uniform weights.
pub fn normalize_weights(w: Weights) -> Weights {
    let sum: f64 = w.iter().sum();
    if sum <= 0.0 {
        return UNIFORM_WEIGHTS;
    }
    w.map(|x| x / sum)
}

fn ratio(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi <= 0.0 {
        1.0
    } else {
        a.min(b) / hi
    }
}

pub fn histogram_intersection(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).sum::<f64>().clamp(0.0, 1.0)
}

/// `1 / (1 + rho)` where `rho` is the log-eigenvalue distance between the two
/// ridge-regularized covariance matrices.
pub fn covariance_similarity(a: &Appearance, b: &Appearance) -> f64 {
    if a.covariance == b.covariance {
        return 1.0;
    }
    // evaluate in a canonical order so the result is exactly symmetric
    let (a, b) = if a.covariance.partial_cmp(&b.covariance) == Some(std::cmp::Ordering::Greater) {
        (b, a)
    } else {
        (a, b)
    };
    let ridge = Matrix3::identity() * COVARIANCE_RIDGE;
    let ma = Matrix3::from(a.covariance_matrix()) + ridge;
    let mb = Matrix3::from(b.covariance_matrix()) + ridge;
    let Some(chol) = mb.cholesky() else {
        return 0.0;
    };
    let Some(l_inv) = chol.l().try_inverse() else {
        return 0.0;
    };
    let whitened = l_inv * ma * l_inv.transpose();
    let sym = (whitened + whitened.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    if eig.iter().any(|&l| !(l > 0.0)) {
        return 0.0;
    }
    let rho = eig.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt();
    1.0 / (1.0 + rho)
}

/// Summed `min` weight over dominant-color bins present in both lists.
pub fn dominant_color_similarity(a: &Appearance, b: &Appearance) -> f64 {
    // summed in bin order so swapping the arguments gives the same bits
    let mut shared: Vec<(usize, f64)> = a
        .dominant
        .iter()
        .filter_map(|&(bin, wa)| {
            b.dominant
                .iter()
                .find(|d| d.0 == bin)
                .map(|&(_, wb)| (bin, wa.min(wb)))
        })
        .collect();
    shared.sort_by_key(|p| p.0);
    shared.iter().map(|p| p.1).sum::<f64>().clamp(0.0, 1.0)
}

/// The five similarities, each in `[0, 1]`.
pub fn descriptor_similarities(a: &Detection, b: &Detection) -> [f64; DESCRIPTOR_COUNT] {
    [
        ratio(a.bbox.area(), b.bbox.area()),
        ratio(a.bbox.shape_ratio(), b.bbox.shape_ratio()),
        histogram_intersection(&a.appearance.histogram, &b.appearance.histogram),
        covariance_similarity(&a.appearance, &b.appearance),
        dominant_color_similarity(&a.appearance, &b.appearance),
    ]
}

pub fn weighted_score(weights: &Weights, sims: &[f64; DESCRIPTOR_COUNT]) -> f64 {
    weights.iter().zip(sims).map(|(w, s)| w * s).sum()
}

pub fn link_score(a: &Detection, b: &Detection, params: &TrackerParams) -> f64 {
    weighted_score(&params.weights, &descriptor_similarities(a, b))
}

#[derive(Debug, Clone)]
struct ActiveTrack {
    trajectory: Trajectory,
    last_seen: usize,
}

impl ActiveTrack {
    fn last(&self) -> &Detection {
        self.trajectory.observations.last().expect("tracks are never empty")
    }
}

/// Online tracker state. Feed frames in increasing order with [`Tracker::step`].
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    active: Vec<ActiveTrack>,
    finished: Vec<Trajectory>,
    next_track_id: u64,
    last_frame: Option<usize>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            active: Vec::new(),
            finished: Vec::new(),
            next_track_id: 1,
            last_frame: None,
        })
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    /// Swaps parameters for subsequent frames. Open tracks keep their ids.
    pub fn set_params(&mut self, params: TrackerParams) -> Result<()> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn step(&mut self, frame: usize, detections: &[Detection]) -> Result<()> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::OutOfOrderFrame { last, got: frame });
            }
        }
        self.last_frame = Some(frame);

        let window = self.params.temporal_window;
        let (keep, expired): (Vec<_>, Vec<_>) = std::mem::take(&mut self.active)
            .into_iter()
            .partition(|t| frame - t.last_seen <= window);
        self.active = keep;
        self.finished.extend(expired.into_iter().map(|t| t.trajectory));

        let mut dets: Vec<&Detection> = detections.iter().collect();
        dets.sort_by_key(|d| d.id);

        let theta = self.params.link_threshold;
        let scores: Vec<Vec<f64>> = self
            .active
            .iter()
            .map(|t| dets.iter().map(|d| link_score(t.last(), d, &self.params)).collect())
            .collect();
        let gains: Vec<Vec<f64>> = scores
            .iter()
            .map(|row| row.iter().map(|&s| if s >= theta { s } else { 0.0 }).collect())
            .collect();

        let mut taken = vec![false; dets.len()];
        if !self.active.is_empty() && !dets.is_empty() {
            for (ti, dj) in max_weight_assignment(&gains).into_iter().enumerate() {
                let Some(dj) = dj else { continue };
                if scores[ti][dj] >= theta {
                    taken[dj] = true;
                    let mut obs = dets[dj].clone();
                    obs.frame = frame;
                    let track = &mut self.active[ti];
                    track.trajectory.observations.push(obs);
                    track.last_seen = frame;
                }
            }
        }
        for (d, _) in dets.iter().zip(&taken).filter(|(_, t)| !**t) {
            let mut obs = (*d).clone();
            obs.frame = frame;
            self.active.push(ActiveTrack {
                trajectory: Trajectory {
                    track_id: self.next_track_id,
                    observations: vec![obs],
                },
                last_seen: frame,
            });
            self.next_track_id += 1;
        }
        Ok(())
    }

    /// Closes every open track and returns all trajectories ordered by id.
    pub fn finish(mut self) -> Vec<Trajectory> {
        self.finished
            .extend(self.active.drain(..).map(|t| t.trajectory));
        self.finished.sort_by_key(|t| t.track_id);
        self.finished
    }
}

/// Tracks `frames` (frame `i` of the slice is frame `first_frame + i`) with
/// fixed parameters.
pub fn track_frames(
    frames: &[Vec<Detection>],
    first_frame: usize,
    params: TrackerParams,
) -> Result<Vec<Trajectory>> {
    let mut tracker = Tracker::new(params)?;
    for (i, dets) in frames.iter().enumerate() {
        tracker.step(first_frame + i, dets)?;
    }
    Ok(tracker.finish())
}
