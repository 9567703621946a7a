//! Offline learning of descriptor weights for one context segment.
//!
//! Every descriptor similarity is treated as a weak classifier for the
//! question "do these two annotated objects belong to the same trajectory?".
//! Discrete AdaBoost over per-descriptor decision stumps picks the most
//! useful descriptors; a descriptor's weight is the share of the boosting
//! vote (sum of `alpha`) its stumps received.

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::mt_pt_ml;
use crate::scene::{Detection, Sequence};
use crate::tracker::{
    descriptor_similarities, normalize_weights, track_frames, TrackerParams, Weights,
    DESCRIPTOR_COUNT, UNIFORM_WEIGHTS,
};

/// Upper bound on a round's vote, reached when its stump makes no error.
pub fn alpha_cap() -> f64 {
    1e6f64.ln() / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSample {
    pub similarities: [f64; DESCRIPTOR_COUNT],
    pub same_object: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSampleParams {
    pub temporal_window: usize,
    /// Negatives kept per positive.
    pub neg_ratio: f64,
    pub seed: u64,
}

impl Default for LinkSampleParams {
    fn default() -> Self {
        Self {
            temporal_window: 10,
            neg_ratio: 3.0,
            seed: 0,
        }
    }
}

/// Pairs of annotated objects at most `temporal_window` frames apart within
/// frames `[start, end]`. Positives are all same-object pairs at distinct
/// frames; different-object pairs are subsampled to `neg_ratio` per positive.
pub fn build_link_samples(
    seq: &Sequence,
    start: usize,
    end: usize,
    params: &LinkSampleParams,
) -> Result<Vec<LinkSample>> {
    let ann = seq.annotations.as_ref().ok_or(Error::MissingAnnotations)?;
    if end >= ann.len() || start > end {
        return Err(Error::RangeOutOfBounds {
            start,
            end,
            len: ann.len(),
        });
    }
    let window = params.temporal_window;
    let mut positives: Vec<(&Detection, &Detection)> = Vec::new();
    let mut negatives: Vec<(&Detection, &Detection)> = Vec::new();
    for f in start..=end {
        for a in &ann[f] {
            for g in f..=(f + window).min(end) {
                for b in &ann[g] {
                    if g == f && b.detection.id <= a.detection.id {
                        continue;
                    }
                    if a.object_id == b.object_id {
                        if g > f {
                            positives.push((&a.detection, &b.detection));
                        }
                    } else {
                        negatives.push((&a.detection, &b.detection));
                    }
                }
            }
        }
    }
    if positives.is_empty() {
        return Err(Error::Unlearnable(format!(
            "no same-object pairs within {window} frames in frames {start}..={end}"
        )));
    }
    let keep = ((positives.len() as f64) * params.neg_ratio).round() as usize;
    if negatives.len() > keep {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut chosen = sample_indices(&mut rng, negatives.len(), keep).into_vec();
        chosen.sort_unstable();
        negatives = chosen.into_iter().map(|i| negatives[i]).collect();
    }
    let to_sample = |(a, b): (&Detection, &Detection), same| LinkSample {
        similarities: descriptor_similarities(a, b),
        same_object: same,
    };
    Ok(positives
        .into_iter()
        .map(|p| to_sample(p, true))
        .chain(negatives.into_iter().map(|p| to_sample(p, false)))
        .collect())
}

/// `s[descriptor] >= threshold` predicts "same object" when `positive`,
/// "different object" otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub descriptor: usize,
    pub threshold: f64,
    pub positive: bool,
}

impl Stump {
    pub fn predict(&self, s: &[f64; DESCRIPTOR_COUNT]) -> bool {
        (s[self.descriptor] >= self.threshold) == self.positive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    pub stump: Stump,
    /// Weighted error of the stump under this round's sample weights.
    pub error: f64,
    pub alpha: f64,
    /// Unweighted training error of the ensemble after this round.
    pub ensemble_error: f64,
    /// Product of `2 sqrt(e (1 - e))` over the rounds so far.
    pub error_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostOutcome {
    pub weights: Weights,
    pub rounds: Vec<BoostRound>,
    /// False when no stump beat chance and the weights fell back to uniform.
    pub informative: bool,
}

/// Discrete AdaBoost with per-descriptor stumps, `rounds` rounds at most.
/// Stops early when no stump has weighted error below 1/2.
pub fn adaboost_weights(samples: &[LinkSample], rounds: usize) -> Result<BoostOutcome> {
    let n_pos = samples.iter().filter(|s| s.same_object).count();
    if n_pos == 0 || n_pos == samples.len() {
        return Err(Error::Degenerate(
            "boosting needs both same-object and different-object samples".into(),
        ));
    }
    // canonical order makes the result independent of the input order
    let mut samples = samples.to_vec();
    samples.sort_by(|a, b| {
        a.similarities
            .iter()
            .zip(&b.similarities)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.same_object.cmp(&b.same_object))
    });
    let n = samples.len();
    let labels: Vec<f64> = samples.iter().map(|s| if s.same_object { 1.0 } else { -1.0 }).collect();

    // per descriptor: sample indices sorted by value, and group boundaries
    let orders: Vec<Vec<usize>> = (0..DESCRIPTOR_COUNT)
        .map(|k| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| {
                samples[a].similarities[k]
                    .total_cmp(&samples[b].similarities[k])
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let mut dist = vec![1.0 / n as f64; n];
    let mut ensemble = vec![0.0; n];
    let mut bound = 1.0;
    let mut vote = [0.0; DESCRIPTOR_COUNT];
    let mut history = Vec::new();

    for _ in 0..rounds {
        let Some((stump, error)) = best_stump(&samples, &orders, &dist) else {
            break;
        };
        if error >= 0.5 {
            break;
        }
        let alpha = if error <= 0.0 {
            alpha_cap()
        } else {
            (0.5 * ((1.0 - error) / error).ln()).min(alpha_cap())
        };
        let mut z = 0.0;
        for i in 0..n {
            let h = if stump.predict(&samples[i].similarities) { 1.0 } else { -1.0 };
            dist[i] *= (-alpha * labels[i] * h).exp();
            z += dist[i];
            ensemble[i] += alpha * h;
        }
        dist.iter_mut().for_each(|d| *d /= z);
        bound *= 2.0 * (error * (1.0 - error)).sqrt();
        let wrong = (0..n).filter(|&i| labels[i] * ensemble[i] <= 0.0).count();
        vote[stump.descriptor] += alpha;
        history.push(BoostRound {
            stump,
            error,
            alpha,
            ensemble_error: wrong as f64 / n as f64,
            error_bound: bound,
        });
    }

    if history.is_empty() {
        return Ok(BoostOutcome {
            weights: UNIFORM_WEIGHTS,
            rounds: history,
            informative: false,
        });
    }
    Ok(BoostOutcome {
        weights: normalize_weights(vote),
        rounds: history,
        informative: true,
    })
}

/// Lowest-error stump over every descriptor, midpoint threshold and polarity.
/// Ties keep the first candidate in (descriptor, threshold, positive-first) order.
fn best_stump(
    samples: &[LinkSample],
    orders: &[Vec<usize>],
    dist: &[f64],
) -> Option<(Stump, f64)> {
    let mut same_total = 0.0;
    let mut diff_total = 0.0;
    for (s, d) in samples.iter().zip(dist) {
        if s.same_object {
            same_total += d;
        } else {
            diff_total += d;
        }
    }
    let mut best: Option<(Stump, f64)> = None;
    for (k, order) in orders.iter().enumerate() {
        let mut same_below = 0.0;
        let mut diff_below = 0.0;
        for pos in 0..order.len() - 1 {
            let i = order[pos];
            if samples[i].same_object {
                same_below += dist[i];
            } else {
                diff_below += dist[i];
            }
            let v = samples[i].similarities[k];
            let next = samples[order[pos + 1]].similarities[k];
            if next <= v {
                continue;
            }
            let threshold = 0.5 * (v + next);
            let err_pos = same_below + (diff_total - diff_below);
            let err_neg = (same_total - same_below) + diff_below;
            for (positive, err) in [(true, err_pos), (false, err_neg)] {
                if best.is_none_or(|b| err < b.1) {
                    best = Some((
                        Stump {
                            descriptor: k,
                            threshold,
                            positive,
                        },
                        err.max(0.0),
                    ));
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SatisfactoryParams {
    pub weights: Weights,
    /// MT ratio (in `[0, 1]`) reached on the segment with these weights.
    pub achieved_quality: f64,
    pub satisfied: bool,
    /// False when boosting found no signal and the weights are uniform.
    pub informative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub samples: LinkSampleParams,
    pub rounds: usize,
    pub quality_threshold: f64,
    pub tracker: TrackerParams,
    pub iou_threshold: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            samples: LinkSampleParams::default(),
            rounds: 20,
            quality_threshold: 0.7,
            tracker: TrackerParams::default(),
            iou_threshold: 0.5,
        }
    }
}

/// Learns weights for frames `[start, end]` and checks them by tracking the
/// annotated objects of the segment and measuring MT.
pub fn optimize_segment(
    seq: &Sequence,
    start: usize,
    end: usize,
    cfg: &OptimizerConfig,
) -> Result<SatisfactoryParams> {
    let samples = build_link_samples(seq, start, end, &cfg.samples)?;
    let (weights, informative) = match adaboost_weights(&samples, cfg.rounds) {
        Ok(out) => (out.weights, out.informative),
        // a single object offers no negatives: nothing to discriminate
        Err(Error::Degenerate(_)) => (UNIFORM_WEIGHTS, false),
        Err(e) => return Err(e),
    };
    let quality = segment_quality(seq, start, end, cfg.tracker.with_weights(weights), cfg.iou_threshold)?;
    Ok(SatisfactoryParams {
        weights,
        achieved_quality: quality,
        satisfied: quality >= cfg.quality_threshold,
        informative,
    })
}

/// MT ratio obtained by tracking the annotated objects of `[start, end]`.
pub fn segment_quality(
    seq: &Sequence,
    start: usize,
    end: usize,
    params: TrackerParams,
    iou_threshold: f64,
) -> Result<f64> {
    let frames = seq.annotations_as_detections().ok_or(Error::MissingAnnotations)?;
    let outputs = track_frames(&frames[start..=end], start, params)?;
    let gt = seq.ground_truth(start, end);
    Ok(mt_pt_ml(&gt, &outputs, iou_threshold)?.mt / 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{AnnotatedObject, Appearance, BBox};

    fn sample(s: [f64; 5], same: bool) -> LinkSample {
        LinkSample {
            similarities: s,
            same_object: same,
        }
    }

    #[test]
    fn perfect_descriptor_gets_all_weight() {
        let samples = vec![
            sample([0.5, 0.5, 0.9, 0.5, 0.5], true),
            sample([0.5, 0.5, 0.8, 0.5, 0.5], true),
            sample([0.5, 0.5, 0.2, 0.5, 0.5], false),
            sample([0.5, 0.5, 0.1, 0.5, 0.5], false),
        ];
        let out = adaboost_weights(&samples, 1).unwrap();
        // one round by hand: the s3 stump at 0.5 has zero error, alpha is capped
        let r = out.rounds[0];
        assert_eq!(r.stump, Stump { descriptor: 2, threshold: 0.5, positive: true });
        assert_eq!(r.error, 0.0);
        assert_eq!(r.alpha, alpha_cap());
        assert_eq!(out.weights, [0.0, 0.0, 1.0, 0.0, 0.0]);
        let out = adaboost_weights(&samples, 20).unwrap();
        assert_eq!(out.weights, [0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn no_signal_falls_back_to_uniform() {
        let samples = vec![
            sample([0.5; 5], true),
            sample([0.5; 5], false),
            sample([0.5; 5], true),
            sample([0.5; 5], false),
        ];
        let out = adaboost_weights(&samples, 20).unwrap();
        assert!(!out.informative);
        assert_eq!(out.weights, [0.2; 5]);
    }

    #[test]
    fn single_label_is_degenerate() {
        let samples = vec![sample([0.5; 5], true), sample([0.6; 5], true)];
        assert!(matches!(adaboost_weights(&samples, 5), Err(Error::Degenerate(_))));
    }

    fn ann(frame: usize, id: u64, object: u64, x: f64) -> AnnotatedObject {
        let mut hist = vec![0.0; 4];
        hist[object as usize % 4] = 1.0;
        AnnotatedObject {
            detection: Detection {
                frame,
                id,
                bbox: BBox::new(x, 0.0, 5.0, 10.0),
                appearance: Appearance {
                    histogram: hist,
                    covariance: [1., 0., 0., 1., 0., 1.],
                    dominant: vec![(object as usize % 4, 1.0)],
                    contrast: 0.5,
                },
            },
            object_id: object,
        }
    }

    #[test]
    fn positives_enumerate_pairs_in_window() {
        let mut seq = Sequence::new(100.0, 100.0, 3);
        seq.annotations = Some((0..3).map(|f| vec![ann(f, f as u64 + 1, 1, 10.0)]).collect());
        let p = LinkSampleParams { temporal_window: 2, ..Default::default() };
        let s = build_link_samples(&seq, 0, 2, &p).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|x| x.same_object));
        let p1 = LinkSampleParams { temporal_window: 1, ..Default::default() };
        assert_eq!(build_link_samples(&seq, 0, 2, &p1).unwrap().len(), 2);
    }

    #[test]
    fn cross_pairs_are_negatives() {
        let mut seq = Sequence::new(100.0, 100.0, 2);
        seq.annotations = Some(
            (0..2)
                .map(|f| vec![ann(f, 10 * f as u64 + 1, 1, 10.0), ann(f, 10 * f as u64 + 2, 2, 50.0)])
                .collect(),
        );
        let p = LinkSampleParams { temporal_window: 1, neg_ratio: 10.0, seed: 0 };
        let s = build_link_samples(&seq, 0, 1, &p).unwrap();
        assert_eq!(s.iter().filter(|x| x.same_object).count(), 2);
        // same-frame pairs (2) plus cross-frame pairs (2)
        assert_eq!(s.iter().filter(|x| !x.same_object).count(), 4);
    }

    #[test]
    fn single_frame_is_unlearnable() {
        let mut seq = Sequence::new(100.0, 100.0, 1);
        seq.annotations = Some(vec![vec![ann(0, 1, 1, 10.0), ann(0, 2, 2, 50.0)]]);
        assert!(matches!(
            build_link_samples(&seq, 0, 0, &LinkSampleParams::default()),
            Err(Error::Unlearnable(_))
        ));
    }

    #[test]
    fn single_object_segment_is_trivially_satisfied() {
        let mut seq = Sequence::new(100.0, 100.0, 20);
        seq.annotations = Some((0..20).map(|f| vec![ann(f, f as u64 + 1, 1, 10.0 + f as f64)]).collect());
        let out = optimize_segment(&seq, 0, 19, &OptimizerConfig::default()).unwrap();
        assert_eq!(out.achieved_quality, 1.0);
        assert!(out.satisfied);
        assert!(!out.informative);
    }
}
