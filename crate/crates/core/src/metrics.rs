//! Trajectory-level MT/PT/ML and frame-level CLEAR MOT (MOTA/MOTP).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::scene::{iou, BBox, Trajectory};

/// Coverage strictly above this makes a trajectory mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
/// Coverage below this makes a trajectory mostly lost.
pub const MOSTLY_LOST: f64 = 0.2;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// `(id, box)` pairs present in one frame.
pub type FrameBoxes = Vec<(u64, BBox)>;

struct FrameIndex<'a> {
    by_frame: HashMap<usize, Vec<(u64, &'a BBox)>>,
}

impl<'a> FrameIndex<'a> {
    fn new(outputs: &'a [Trajectory]) -> Self {
        let mut by_frame: HashMap<usize, Vec<(u64, &BBox)>> = HashMap::new();
        for t in outputs {
            for d in &t.observations {
                by_frame.entry(d.frame).or_default().push((t.track_id, &d.bbox));
            }
        }
        Self { by_frame }
    }

    fn coverage(&self, gt: &Trajectory, iou_thr: f64) -> f64 {
        if gt.is_empty() {
            return 0.0;
        }
        let mut hits: HashMap<u64, usize> = HashMap::new();
        for obs in &gt.observations {
            if let Some(cands) = self.by_frame.get(&obs.frame) {
                for &(id, b) in cands {
                    if iou(&obs.bbox, b) >= iou_thr {
                        *hits.entry(id).or_default() += 1;
                    }
                }
            }
        }
        hits.values().copied().max().unwrap_or(0) as f64 / gt.len() as f64
    }
}

/// Best fraction of `gt`'s frames covered by one single output trajectory.
pub fn trajectory_coverage(gt: &Trajectory, outputs: &[Trajectory], iou_thr: f64) -> f64 {
    FrameIndex::new(outputs).coverage(gt, iou_thr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MtPtMl {
    pub mt: f64,
    pub pt: f64,
    pub ml: f64,
    pub gt_count: usize,
}

pub fn classify_coverage(c: f64) -> usize {
    if c > MOSTLY_TRACKED {
        0
    } else if c >= MOSTLY_LOST {
        1
    } else {
        2
    }
}

pub fn mt_pt_ml(gt: &[Trajectory], outputs: &[Trajectory], iou_thr: f64) -> Result<MtPtMl> {
    if gt.is_empty() {
        return Err(Error::Empty("no ground-truth trajectories".into()));
    }
    let index = FrameIndex::new(outputs);
    let mut counts = [0usize; 3];
    for g in gt {
        counts[classify_coverage(index.coverage(g, iou_thr))] += 1;
    }
    Ok(from_counts(counts))
}

fn from_counts(counts: [usize; 3]) -> MtPtMl {
    let n = counts.iter().sum::<usize>();
    let pct = |c: usize| 100.0 * c as f64 / n as f64;
    let mt = pct(counts[0]);
    let pt = pct(counts[1]);
    MtPtMl {
        mt,
        pt,
        ml: 100.0 - mt - pt,
        gt_count: n,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClearCounts {
    pub matches: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub id_switches: usize,
    pub total_gt: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClearMot {
    pub mota: f64,
    /// Mean IoU over matches; 0 when there are none.
    pub motp: f64,
    pub counts: ClearCounts,
}

/// CLEAR MOT over aligned per-frame ground truth and hypotheses.
///
/// Correspondences from earlier frames are kept while their IoU stays at or
/// above `iou_thr`; remaining objects are matched by optimal IoU assignment.
/// A ground-truth object whose matched hypothesis differs from its previous
/// match counts one identity switch.
pub fn clear_mot(gt: &[FrameBoxes], hyp: &[FrameBoxes], iou_thr: f64) -> ClearMot {
    let mut counts = ClearCounts::default();
    let mut overlap_sum = 0.0;
    let mut last_match: HashMap<u64, u64> = HashMap::new();
    let empty = Vec::new();
    for f in 0..gt.len().max(hyp.len()) {
        let g = gt.get(f).unwrap_or(&empty);
        let h = hyp.get(f).unwrap_or(&empty);
        counts.total_gt += g.len();
        let mut g_used = vec![false; g.len()];
        let mut h_used = vec![false; h.len()];

        for (gi, (gid, gbox)) in g.iter().enumerate() {
            let Some(prev) = last_match.get(gid) else { continue };
            if let Some(hi) = h.iter().position(|(hid, _)| hid == prev) {
                let o = iou(gbox, &h[hi].1);
                if !h_used[hi] && o >= iou_thr {
                    g_used[gi] = true;
                    h_used[hi] = true;
                    counts.matches += 1;
                    overlap_sum += o;
                }
            }
        }

        let free_g: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
        let free_h: Vec<usize> = (0..h.len()).filter(|&j| !h_used[j]).collect();
        if !free_g.is_empty() && !free_h.is_empty() {
            let ious: Vec<Vec<f64>> = free_g
                .iter()
                .map(|&i| free_h.iter().map(|&j| iou(&g[i].1, &h[j].1)).collect())
                .collect();
            let gains: Vec<Vec<f64>> = ious
                .iter()
                .map(|row| row.iter().map(|&o| if o >= iou_thr { o } else { 0.0 }).collect())
                .collect();
            for (a, b) in max_weight_assignment(&gains).into_iter().enumerate() {
                let Some(b) = b else { continue };
                if ious[a][b] < iou_thr {
                    continue;
                }
                let (gi, hj) = (free_g[a], free_h[b]);
                g_used[gi] = true;
                h_used[hj] = true;
                counts.matches += 1;
                overlap_sum += ious[a][b];
                let (gid, hid) = (g[gi].0, h[hj].0);
                if let Some(prev) = last_match.insert(gid, hid) {
                    if prev != hid {
                        counts.id_switches += 1;
                    }
                }
            }
        }
        counts.misses += g_used.iter().filter(|u| !**u).count();
        counts.false_positives += h_used.iter().filter(|u| !**u).count();
    }
    let errors = counts.misses + counts.false_positives + counts.id_switches;
    ClearMot {
        mota: 1.0 - errors as f64 / counts.total_gt.max(1) as f64,
        motp: if counts.matches > 0 {
            overlap_sum / counts.matches as f64
        } else {
            0.0
        },
        counts,
    }
}

/// Per-frame boxes of a set of trajectories over `frame_count` frames.
pub fn frame_boxes(trajectories: &[Trajectory], frame_count: usize) -> Vec<FrameBoxes> {
    let mut out = vec![Vec::new(); frame_count];
    for t in trajectories {
        for d in &t.observations {
            if d.frame < frame_count {
                out[d.frame].push((t.track_id, d.bbox));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrackEvalReport {
    pub mt: f64,
    pub pt: f64,
    pub ml: f64,
    pub gt_trajectories: usize,
    pub mota: f64,
    pub motp: f64,
    /// Mean of MOTA and MOTP.
    pub mbar: f64,
    pub counts: ClearCounts,
}

/// Full report for outputs against ground-truth trajectories on
/// `frame_count` frames.
pub fn evaluate(
    gt: &[Trajectory],
    outputs: &[Trajectory],
    frame_count: usize,
    iou_thr: f64,
) -> Result<TrackEvalReport> {
    let m = mt_pt_ml(gt, outputs, iou_thr)?;
    let c = clear_mot(
        &frame_boxes(gt, frame_count),
        &frame_boxes(outputs, frame_count),
        iou_thr,
    );
    Ok(TrackEvalReport {
        mt: m.mt,
        pt: m.pt,
        ml: m.ml,
        gt_trajectories: m.gt_count,
        mota: c.mota,
        motp: c.motp,
        mbar: 0.5 * (c.mota + c.motp),
        counts: c.counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Appearance, Detection};

    fn obs(frame: usize, b: BBox) -> Detection {
        Detection {
            frame,
            id: frame as u64,
            bbox: b,
            appearance: Appearance {
                histogram: vec![1.0],
                covariance: [1., 0., 0., 1., 0., 1.],
                dominant: vec![],
                contrast: 0.5,
            },
        }
    }

    fn traj(id: u64, frames: impl IntoIterator<Item = usize>, b: BBox) -> Trajectory {
        Trajectory {
            track_id: id,
            observations: frames.into_iter().map(|f| obs(f, b)).collect(),
        }
    }

    const B: BBox = BBox { x: 0.0, y: 0.0, w: 10.0, h: 10.0 };

    #[test]
    fn coverage_cases() {
        let gt = traj(1, 0..10, B);
        assert_eq!(trajectory_coverage(&gt, std::slice::from_ref(&gt), 0.5), 1.0);
        assert_eq!(trajectory_coverage(&gt, &[], 0.5), 0.0);
        assert_eq!(trajectory_coverage(&gt, &[traj(7, 0..6, B)], 0.5), 0.6);
        // two halves under different ids only count the larger
        let split = [traj(7, 0..4, B), traj(8, 4..10, B)];
        assert_eq!(trajectory_coverage(&gt, &split, 0.5), 0.6);
    }

    fn coverage_run(covered: &[usize]) -> MtPtMl {
        let gts: Vec<Trajectory> = (0..covered.len()).map(|i| {
            let b = BBox::new(100.0 * i as f64, 0.0, 10.0, 10.0);
            traj(i as u64, 0..100, b)
        }).collect();
        let outs: Vec<Trajectory> = covered.iter().enumerate().map(|(i, &n)| {
            let b = BBox::new(100.0 * i as f64, 0.0, 10.0, 10.0);
            traj(100 + i as u64, 0..n, b)
        }).collect();
        mt_pt_ml(&gts, &outs, 0.5).unwrap()
    }

    #[test]
    fn mt_pt_ml_cases() {
        let third = 100.0 / 3.0;
        let r = coverage_run(&[100, 50, 0]);
        assert!((r.mt - third).abs() < 1e-9 && (r.pt - third).abs() < 1e-9 && (r.ml - third).abs() < 1e-9);
        let r = coverage_run(&[100, 100]);
        assert_eq!((r.mt, r.pt, r.ml), (100.0, 0.0, 0.0));
        // 0.85 is MT; exactly 0.8 is PT; 0.19 is ML
        let r = coverage_run(&[85, 80, 19]);
        assert!((r.mt - third).abs() < 1e-9 && (r.pt - third).abs() < 1e-9 && (r.ml - third).abs() < 1e-9);
        assert!(mt_pt_ml(&[], &[], 0.5).is_err());
    }

    #[test]
    fn clear_identity_and_empty() {
        let gt: Vec<FrameBoxes> = (0..5).map(|_| vec![(1, B)]).collect();
        let r = clear_mot(&gt, &gt, 0.5);
        assert_eq!((r.mota, r.motp), (1.0, 1.0));
        let r = clear_mot(&gt, &[], 0.5);
        assert_eq!(r.mota, 0.0);
        assert_eq!(r.motp, 0.0);
        assert_eq!(r.counts.matches, 0);
        assert_eq!(r.counts.misses, 5);
    }

    #[test]
    fn false_positive_lowers_mota() {
        let gt: Vec<FrameBoxes> = (0..4).map(|_| vec![(1, B)]).collect();
        let hyp: Vec<FrameBoxes> = (0..4)
            .map(|_| vec![(1, B), (9, BBox::new(50., 50., 5., 5.))])
            .collect();
        let r = clear_mot(&gt, &hyp, 0.5);
        assert_eq!(r.counts.false_positives, 4);
        assert_eq!(r.mota, 0.0);
    }
}
