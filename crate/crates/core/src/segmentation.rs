//! Cuts a sequence into consecutive chunks of stable context.
//!
//! The sequence is read in parts of `l` frames. The first part seeds a
//! code-book model; each later part is compared with the running model of the
//! current segment and either merged into it (distance below `th1`) or used to
//! seed a new segment.

use serde::{Deserialize, Serialize};

use crate::codebook::ContextModel;
use crate::error::{Error, Result};
use crate::features::{extract_context, ContextChunk, FeatureSource};
use crate::scene::Sequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextSegment {
    pub start_frame: usize,
    /// Inclusive.
    pub end_frame: usize,
    pub model: ContextModel,
    /// Distance of every merged part to the running model at merge time.
    pub merge_distances: Vec<f64>,
}

impl ContextSegment {
    pub fn len(&self) -> usize {
        self.end_frame + 1 - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationParams {
    pub part_len: usize,
    pub th1: f64,
    pub eps: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            part_len: 50,
            th1: 0.5,
            eps: 0.5,
        }
    }
}

/// Segments precomputed per-frame context samples.
pub fn segment_chunk(chunk: &ContextChunk, params: SegmentationParams) -> Result<Vec<ContextSegment>> {
    if params.part_len == 0 {
        return Err(Error::Config("part length must be >= 1".into()));
    }
    if chunk.is_empty() {
        return Err(Error::Empty("cannot segment an empty sequence".into()));
    }
    let mut segments: Vec<ContextSegment> = Vec::new();
    for (i, part) in chunk.samples.chunks(params.part_len).enumerate() {
        let part = ContextChunk::new(chunk.start_frame + i * params.part_len, part.to_vec());
        if let Some(current) = segments.last_mut() {
            let d = current.model.distance(&part, params.eps);
            if d < params.th1 {
                current.model.absorb(&part, params.eps);
                current.end_frame = part.end_frame();
                current.merge_distances.push(d);
                continue;
            }
        }
        segments.push(ContextSegment {
            start_frame: part.start_frame,
            end_frame: part.end_frame(),
            model: ContextModel::build(&part, params.eps)?,
            merge_distances: Vec::new(),
        });
    }
    Ok(segments)
}

/// Segments an annotated sequence.
pub fn segment_context(seq: &Sequence, params: SegmentationParams) -> Result<Vec<ContextSegment>> {
    if !seq.has_annotations() {
        return Err(Error::MissingAnnotations);
    }
    let chunk = extract_context(seq, FeatureSource::Annotations, 0, seq.len())?;
    segment_chunk(&chunk, params)
}
