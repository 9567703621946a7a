//! End-to-end runs: offline learning over annotated sequences and the
//! fixed-versus-adaptive comparison.

use serde::{Deserialize, Serialize};

use crate::clustering::{LearnedContext, LearnedDatabase, SourceId};
use crate::codebook::ContextModel;
use crate::config::Config;
use crate::controller::{track_adaptive, Decision};
use crate::error::{Error, Result};
use crate::features::{extract_context, FeatureSource};
use crate::metrics::{evaluate, TrackEvalReport};
use crate::optimizer::optimize_segment;
use crate::scene::{Sequence, Trajectory};
use crate::segmentation::segment_context;
use crate::sim::{scenario, SimConfig, CONTROL_SCENARIO, SWITCH_SCENARIO};
use crate::tracker::{track_frames, TrackerParams, Weights};

/// A sequence with the name used in provenance ids.
#[derive(Debug, Clone)]
pub struct NamedSequence {
    pub name: String,
    pub sequence: Sequence,
}

impl NamedSequence {
    pub fn new(name: impl Into<String>, sequence: Sequence) -> Self {
        Self {
            name: name.into(),
            sequence,
        }
    }
}

fn map_maybe_parallel<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Segments one annotated sequence and learns weights for every segment.
pub fn learn_contexts(named: &NamedSequence, cfg: &Config) -> Result<Vec<LearnedContext>> {
    let seq = &named.sequence;
    if !seq.has_annotations() {
        return Err(Error::MissingAnnotations.in_stage(format!("segment {}", named.name)));
    }
    let segments = segment_context(seq, cfg.segmentation())
        .map_err(|e| e.in_stage(format!("segment {}", named.name)))?;
    let opt = cfg.optimizer();
    let learned = map_maybe_parallel(&segments.iter().enumerate().collect::<Vec<_>>(), |(i, seg)| {
        let params = optimize_segment(seq, seg.start_frame, seg.end_frame, &opt)?;
        let chunk = extract_context(seq, FeatureSource::Annotations, seg.start_frame, seg.len())?;
        Ok(LearnedContext {
            source: SourceId::new(named.name.clone(), *i),
            start_frame: seg.start_frame,
            end_frame: seg.end_frame,
            model: ContextModel::build(&chunk, cfg.eps)?,
            params,
        })
    });
    learned
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage(format!("optimize {}", named.name)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterSummary {
    pub cluster_id: u64,
    pub members: usize,
    pub support_frames: u64,
    pub weights: Weights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnSummary {
    pub config_hash: String,
    pub sequences: usize,
    pub contexts: usize,
    pub satisfied: usize,
    pub clusters: Vec<ClusterSummary>,
}

/// Learns contexts over every sequence, then clusters the satisfied ones.
pub fn run_learn_pipeline(seqs: &[NamedSequence], cfg: &Config) -> Result<(LearnedDatabase, LearnSummary)> {
    cfg.validate()?;
    if seqs.is_empty() {
        return Err(Error::Empty("no input sequences".into()));
    }
    let per_seq = map_maybe_parallel(seqs, |s| learn_contexts(s, cfg));
    let mut contexts = Vec::new();
    for r in per_seq {
        contexts.extend(r?);
    }
    let db = LearnedDatabase::from_contexts(&contexts, cfg.th1, cfg.eps, cfg.chunk_len)
        .map_err(|e| e.in_stage("cluster"))?;
    let summary = LearnSummary {
        config_hash: cfg.hash(),
        sequences: seqs.len(),
        contexts: contexts.len(),
        satisfied: contexts.iter().filter(|c| c.params.satisfied).count(),
        clusters: db
            .clusters
            .iter()
            .map(|c| ClusterSummary {
                cluster_id: c.cluster_id,
                members: c.member_ids.len(),
                support_frames: c.support_frames,
                weights: c.weights,
            })
            .collect(),
    };
    Ok((db, summary))
}

/// Tracks the detections of `seq` with fixed parameters.
pub fn track_fixed(seq: &Sequence, params: TrackerParams) -> Result<Vec<Trajectory>> {
    track_frames(&seq.frames, 0, params)
}

/// Scores trajectories against the sequence's annotations.
pub fn evaluate_sequence(seq: &Sequence, outputs: &[Trajectory], iou_thr: f64) -> Result<TrackEvalReport> {
    if !seq.has_annotations() {
        return Err(Error::MissingAnnotations);
    }
    let gt = seq.ground_truth(0, seq.len().saturating_sub(1));
    evaluate(&gt, outputs, seq.len(), iou_thr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompareReport {
    pub config_hash: String,
    pub seed: u64,
    pub frames: usize,
    pub fixed: TrackEvalReport,
    pub adaptive: TrackEvalReport,
    pub decisions: Vec<Decision>,
}

/// Tracks the same detections with uniform weights and with the controller.
pub fn run_compare_experiment(
    seq: &Sequence,
    db: &LearnedDatabase,
    cfg: &Config,
    seed: u64,
) -> Result<CompareReport> {
    let base = cfg.tracker();
    let fixed = track_fixed(seq, base).map_err(|e| e.in_stage("fixed tracking"))?;
    let run = track_adaptive(&seq.frames, seq.frame_area(), db, base, cfg.controller())
        .map_err(|e| e.in_stage("adaptive tracking"))?;
    Ok(CompareReport {
        config_hash: cfg.hash(),
        seed,
        frames: seq.len(),
        fixed: evaluate_sequence(seq, &fixed, cfg.iou_threshold).map_err(|e| e.in_stage("evaluate"))?,
        adaptive: evaluate_sequence(seq, &run.trajectories, cfg.iou_threshold)
            .map_err(|e| e.in_stage("evaluate"))?,
        decisions: run.decisions,
    })
}

/// Scenarios used to build the default learned database.
pub const TRAINING_SCENARIOS: [&str; 2] = [SWITCH_SCENARIO, CONTROL_SCENARIO];

/// First seed of the training corpus; evaluation seeds stay below it.
pub const TRAINING_SEED_BASE: u64 = 1000;

/// Annotated training sequences: `per_scenario` seeds of every training scenario.
pub fn training_corpus(cfg: &Config, per_scenario: u64) -> Result<Vec<NamedSequence>> {
    let sim = SimConfig {
        bins: cfg.bins,
        dominant_k: cfg.dominant_k,
        ..SimConfig::default()
    };
    let mut out = Vec::new();
    for name in TRAINING_SCENARIOS {
        let sc = scenario(name)?;
        for i in 0..per_scenario {
            let seed = TRAINING_SEED_BASE + i;
            out.push(NamedSequence::new(format!("{name}-{seed}"), sc.generate_in(&sim, seed)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unannotated_input_fails_in_segment_stage() {
        let seq = Sequence::new(100.0, 100.0, 10);
        let err = run_learn_pipeline(&[NamedSequence::new("bare", seq)], &Config::default()).unwrap_err();
        assert!(err.is_input_error());
        assert!(err.to_string().contains("segment bare"));
    }

    #[test]
    fn homogeneous_sequence_gives_one_cluster() {
        let seq = scenario(CONTROL_SCENARIO).unwrap().generate(5).unwrap();
        let (db, summary) = run_learn_pipeline(&[NamedSequence::new("c", seq)], &Config::default()).unwrap();
        assert_eq!(db.clusters.len(), 1);
        assert_eq!(summary.contexts, 1);
    }
}
