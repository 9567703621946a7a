//! Online parameter control: every `l` frames the context of the last chunk
//! (measured on detections) is matched against the learned database and the
//! tracker's descriptor weights are swapped for the matching cluster's.

use serde::{Deserialize, Serialize};

use crate::clustering::{closer, LearnedDatabase};
use crate::error::{Error, Result};
use crate::features::{frame_sample, ContextChunk, ContextSample, FEATURE_COUNT};
use crate::scene::{Detection, Trajectory};
use crate::tracker::{Tracker, TrackerParams, Weights};

/// Which frames a chunk's decision governs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApplyMode {
    /// The decision taken at the end of a chunk governs the following chunk.
    #[default]
    Prospective,
    /// Two-pass: frames are buffered, the chunk is tracked with its own decision.
    Retroactive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub th1: f64,
    pub eps: f64,
    pub chunk_len: usize,
    pub mode: ApplyMode,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            th1: 0.5,
            eps: 0.5,
            chunk_len: 50,
            mode: ApplyMode::Prospective,
        }
    }
}

/// Outcome of matching one chunk against the database.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub cluster_id: u64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Decision {
    pub chunk: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    /// None when the context is unknown to the database.
    pub cluster_id: Option<u64>,
    /// Distance to the chosen cluster, or to the closest one when unknown.
    /// None when the database is empty.
    pub distance: Option<f64>,
    pub changed: bool,
    /// Weights in force after the decision.
    pub weights: Weights,
    /// First frame tracked with `weights`.
    pub applies_from: usize,
}

/// Distances of `chunk` to every cluster, in database order.
pub fn cluster_distances(chunk: &ContextChunk, db: &LearnedDatabase, eps: f64) -> Vec<(u64, f64)> {
    let values: [Vec<f64>; FEATURE_COUNT] = std::array::from_fn(|k| chunk.values(k));
    db.clusters
        .iter()
        .map(|c| (c.cluster_id, c.distance_from_values(&values, eps)))
        .collect()
}

/// The closest cluster, lowest id on ties. None for an empty database.
pub fn nearest_cluster(chunk: &ContextChunk, db: &LearnedDatabase, eps: f64) -> Option<Match> {
    cluster_distances(chunk, db, eps)
        .into_iter()
        .min_by(|a, b| closer((a.1, a.0), (b.1, b.0)))
        .map(|(cluster_id, distance)| Match { cluster_id, distance })
}

/// The argmin cluster if it lies closer than `th1`, otherwise None.
pub fn tune_parameters(chunk: &ContextChunk, db: &LearnedDatabase, th1: f64, eps: f64) -> Option<Match> {
    nearest_cluster(chunk, db, eps).filter(|m| m.distance < th1)
}

/// True unless the chunk still belongs to the current cluster.
pub fn detect_change(
    chunk: &ContextChunk,
    current: Option<u64>,
    db: &LearnedDatabase,
    th1: f64,
    eps: f64,
) -> bool {
    match current.and_then(|id| db.cluster(id)) {
        Some(c) => c.distance(chunk, eps) >= th1,
        None => true,
    }
}

/// Streaming controller around a [`Tracker`].
#[derive(Debug)]
pub struct Controller<'a> {
    db: &'a LearnedDatabase,
    params: ControllerParams,
    tracker: Tracker,
    current_cluster: Option<u64>,
    buffer: Vec<ContextSample>,
    /// Frames waiting for their chunk's decision (retroactive mode only).
    held: Vec<(usize, Vec<Detection>)>,
    frame_area: f64,
    last_frame: Option<usize>,
    log: Vec<Decision>,
    pending: Vec<ContextChunk>,
}

impl<'a> Controller<'a> {
    pub fn new(
        db: &'a LearnedDatabase,
        initial: TrackerParams,
        params: ControllerParams,
        frame_area: f64,
    ) -> Result<Self> {
        if params.chunk_len == 0 {
            return Err(Error::InvalidParams("chunk length must be >= 1".into()));
        }
        Ok(Self {
            db,
            params,
            tracker: Tracker::new(initial)?,
            current_cluster: None,
            buffer: Vec::with_capacity(params.chunk_len),
            held: Vec::new(),
            frame_area,
            last_frame: None,
            log: Vec::new(),
            pending: Vec::new(),
        })
    }

    pub fn current_cluster(&self) -> Option<u64> {
        self.current_cluster
    }

    pub fn tracker_params(&self) -> &TrackerParams {
        self.tracker.params()
    }

    pub fn log(&self) -> &[Decision] {
        &self.log
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn on_frame(&mut self, frame: usize, detections: &[Detection]) -> Result<()> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::OutOfOrderFrame { last, got: frame });
            }
        }
        self.last_frame = Some(frame);
        let refs: Vec<&Detection> = detections.iter().collect();
        self.buffer.push(frame_sample(frame, &refs, self.frame_area));
        match self.params.mode {
            ApplyMode::Prospective => self.tracker.step(frame, detections)?,
            ApplyMode::Retroactive => self.held.push((frame, detections.to_vec())),
        }
        if self.buffer.len() == self.params.chunk_len {
            self.on_chunk()?;
        }
        Ok(())
    }

    fn on_chunk(&mut self) -> Result<()> {
        let samples = std::mem::take(&mut self.buffer);
        let start = samples[0].frame;
        let chunk = ContextChunk::new(start, samples);
        let (th1, eps) = (self.params.th1, self.params.eps);

        let changed = detect_change(&chunk, self.current_cluster, self.db, th1, eps);
        let (cluster_id, distance) = if !changed {
            let id = self.current_cluster.expect("unchanged implies a current cluster");
            let c = self.db.cluster(id).expect("current cluster is in the database");
            (Some(id), Some(c.distance(&chunk, eps)))
        } else {
            match tune_parameters(&chunk, self.db, th1, eps) {
                Some(m) => {
                    let weights = self.db.cluster(m.cluster_id).expect("matched cluster exists").weights;
                    self.tracker.set_params(self.tracker.params().with_weights(weights))?;
                    (Some(m.cluster_id), Some(m.distance))
                }
                None => {
                    let nearest = nearest_cluster(&chunk, self.db, eps).map(|m| m.distance);
                    (None, nearest)
                }
            }
        };
        self.current_cluster = cluster_id;

        let end_frame = chunk.end_frame();
        let applies_from = match self.params.mode {
            ApplyMode::Prospective => end_frame + 1,
            ApplyMode::Retroactive => start,
        };
        self.log.push(Decision {
            chunk: self.log.len(),
            start_frame: start,
            end_frame,
            cluster_id,
            distance,
            changed,
            weights: self.tracker.params().weights,
            applies_from,
        });
        if cluster_id.is_none() {
            self.pending.push(chunk);
        }
        for (frame, dets) in std::mem::take(&mut self.held) {
            self.tracker.step(frame, &dets)?;
        }
        Ok(())
    }

    /// Decides on a trailing partial chunk, then closes every track.
    pub fn finish(mut self) -> Result<ControllerRun> {
        if !self.buffer.is_empty() {
            self.on_chunk()?;
        }
        Ok(ControllerRun {
            trajectories: self.tracker.finish(),
            decisions: self.log,
            pending_chunks: self.pending,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerRun {
    pub trajectories: Vec<Trajectory>,
    pub decisions: Vec<Decision>,
    /// Chunks no cluster accepted; append them to the database's pending list.
    pub pending_chunks: Vec<ContextChunk>,
}

/// Runs the controller over `frames` (frame `i` of the slice is frame `i`).
pub fn track_adaptive(
    frames: &[Vec<Detection>],
    frame_area: f64,
    db: &LearnedDatabase,
    initial: TrackerParams,
    params: ControllerParams,
) -> Result<ControllerRun> {
    let mut ctl = Controller::new(db, initial, params, frame_area)?;
    for (frame, dets) in frames.iter().enumerate() {
        ctl.on_frame(frame, dets)?;
    }
    ctl.finish()
}
