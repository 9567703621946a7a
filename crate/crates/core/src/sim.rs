//! Deterministic scenario generator: annotated sequences made of context
//! regimes, plus detections derived from the annotations through a noise model.
//!
//! Objects live for the length of their regime and move on straight paths
//! that bounce off the frame borders. Without occlusion each object keeps to
//! its own horizontal lane; crossing objects also sweep vertically through
//! the other lanes. Every object owns a color histogram (a mix of a
//! regime-wide palette and object-specific bumps), a color covariance and a
//! contrast level; annotations carry a per-frame natural fluctuation of
//! those descriptors, detections add sensor noise on top.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{
    intersection_area, AnnotatedObject, Appearance, BBox, Detection, Sequence, DEFAULT_BINS,
    DEFAULT_DOMINANT_K,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegimeSpec {
    pub duration_frames: usize,
    /// Inclusive range.
    pub object_count: (usize, usize),
    /// Object height as a fraction of the frame height.
    pub size_range: (f64, f64),
    /// Object width over height.
    pub aspect_range: (f64, f64),
    pub contrast_range: (f64, f64),
    /// 0: every object shares the regime palette; 1: fully object-specific colors.
    pub appearance_separation: f64,
    /// Fraction of objects whose paths cross the other lanes.
    pub occlusion_intensity: f64,
    /// Width of the color bumps, in histogram bins.
    pub color_spread: f64,
    /// Log-scale std of the natural per-frame descriptor fluctuation.
    pub appearance_variability: f64,
}

impl RegimeSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Infeasible(m.to_string()));
        if self.duration_frames == 0 {
            return bad("regime duration must be >= 1 frame");
        }
        if self.object_count.0 > self.object_count.1 {
            return bad("object count range is empty");
        }
        if !(self.size_range.0 > 0.0 && self.size_range.0 <= self.size_range.1) {
            return bad("size range must be non-empty and positive");
        }
        if !(self.aspect_range.0 > 0.0 && self.aspect_range.0 <= self.aspect_range.1) {
            return bad("aspect range must be non-empty and positive");
        }
        if self.size_range.1 > 1.0 {
            return bad("objects larger than the frame");
        }
        if !(0.0 <= self.contrast_range.0
            && self.contrast_range.0 <= self.contrast_range.1
            && self.contrast_range.1 <= 1.0)
        {
            return bad("contrast range must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.appearance_separation)
            || !(0.0..=1.0).contains(&self.occlusion_intensity)
        {
            return bad("separation and occlusion intensity must lie in [0, 1]");
        }
        if !(self.color_spread > 0.0) || !(self.appearance_variability >= 0.0) {
            return bad("color spread must be > 0 and variability >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NoiseSpec {
    pub miss_probability: f64,
    /// Expected false detections per frame.
    pub false_positive_rate: f64,
    /// Std of box coordinate noise, in pixels.
    pub jitter_std: f64,
    /// Log-scale std of detector-side descriptor noise.
    pub appearance_noise_std: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            miss_probability: 0.0,
            false_positive_rate: 0.0,
            jitter_std: 0.0,
            appearance_noise_std: 0.0,
        }
    }

    /// Misses 5% of objects, 2 px box jitter.
    pub fn moderate() -> Self {
        Self {
            miss_probability: 0.05,
            false_positive_rate: 0.0,
            jitter_std: 2.0,
            appearance_noise_std: 0.05,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.miss_probability) && self.miss_probability != 1.0 {
            return Err(Error::Infeasible("miss probability must lie in [0, 1]".into()));
        }
        if !(self.false_positive_rate >= 0.0)
            || !(self.jitter_std >= 0.0)
            || !(self.appearance_noise_std >= 0.0)
        {
            return Err(Error::Infeasible("noise magnitudes must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimConfig {
    pub frame_width: f64,
    pub frame_height: f64,
    pub bins: usize,
    pub dominant_k: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            frame_width: 640.0,
            frame_height: 480.0,
            bins: DEFAULT_BINS,
            dominant_k: DEFAULT_DOMINANT_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub regimes: Vec<RegimeSpec>,
    pub noise: NoiseSpec,
}

impl Scenario {
    pub fn generate(&self, seed: u64) -> Result<Sequence> {
        generate(&SimConfig::default(), &self.regimes, &self.noise, seed)
    }

    pub fn generate_with(&self, noise: &NoiseSpec, seed: u64) -> Result<Sequence> {
        generate(&SimConfig::default(), &self.regimes, noise, seed)
    }

    pub fn generate_in(&self, cfg: &SimConfig, seed: u64) -> Result<Sequence> {
        generate(cfg, &self.regimes, &self.noise, seed)
    }

    /// First frame of every regime after the first.
    pub fn switch_frames(&self) -> Vec<usize> {
        self.regimes
            .iter()
            .scan(0, |acc, r| {
                *acc += r.duration_frames;
                Some(*acc)
            })
            .take(self.regimes.len().saturating_sub(1))
            .collect()
    }

    pub fn total_frames(&self) -> usize {
        self.regimes.iter().map(|r| r.duration_frames).sum()
    }
}

pub const SWITCH_SCENARIO: &str = "small-to-large-switch";
pub const CROSSING_SCENARIO: &str = "crossing-occlusions";
pub const CROWD_SCENARIO: &str = "low-contrast-crowd";
pub const CONTROL_SCENARIO: &str = "stationary-control";

/// Named scenario catalog.
pub fn preset_scenarios() -> Vec<Scenario> {
    let small = RegimeSpec {
        duration_frames: 300,
        object_count: (7, 7),
        size_range: (0.055, 0.095),
        aspect_range: (0.4, 0.42),
        contrast_range: (0.3, 0.6),
        appearance_separation: 0.9,
        occlusion_intensity: 0.0,
        color_spread: 3.0,
        appearance_variability: 0.35,
    };
    let large = RegimeSpec {
        duration_frames: 300,
        object_count: (3, 3),
        size_range: (0.25, 0.35),
        aspect_range: (0.35, 0.5),
        contrast_range: (0.3, 0.6),
        appearance_separation: 0.5,
        occlusion_intensity: 0.0,
        color_spread: 1.2,
        appearance_variability: 0.12,
    };
    vec![
        Scenario {
            name: SWITCH_SCENARIO.into(),
            description: "many small objects, then a few large ones".into(),
            regimes: vec![small, large],
            noise: NoiseSpec::moderate(),
        },
        Scenario {
            name: CROSSING_SCENARIO.into(),
            description: "mid-size objects whose paths keep crossing".into(),
            regimes: vec![RegimeSpec {
                duration_frames: 400,
                object_count: (5, 5),
                size_range: (0.2, 0.3),
                aspect_range: (0.35, 0.5),
                contrast_range: (0.4, 0.8),
                appearance_separation: 0.7,
                occlusion_intensity: 0.8,
                color_spread: 2.5,
                appearance_variability: 0.2,
            }],
            noise: NoiseSpec::moderate(),
        },
        Scenario {
            name: CROWD_SCENARIO.into(),
            description: "dense, low-contrast crowd with similar clothing".into(),
            regimes: vec![RegimeSpec {
                duration_frames: 400,
                object_count: (12, 14),
                size_range: (0.1, 0.15),
                aspect_range: (0.35, 0.5),
                contrast_range: (0.05, 0.2),
                appearance_separation: 0.4,
                occlusion_intensity: 0.3,
                color_spread: 3.0,
                appearance_variability: 0.25,
            }],
            noise: NoiseSpec::moderate(),
        },
        Scenario {
            name: CONTROL_SCENARIO.into(),
            description: "a few well-separated objects in a steady context".into(),
            regimes: vec![RegimeSpec {
                duration_frames: 400,
                object_count: (4, 4),
                size_range: (0.15, 0.2),
                aspect_range: (0.35, 0.5),
                contrast_range: (0.4, 0.7),
                appearance_separation: 0.9,
                occlusion_intensity: 0.0,
                color_spread: 2.0,
                appearance_variability: 0.1,
            }],
            noise: NoiseSpec::moderate(),
        },
    ]
}

pub fn scenario(name: &str) -> Result<Scenario> {
    preset_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

struct SimObject {
    object_id: u64,
    width: f64,
    height: f64,
    /// Top-left position at the regime's first frame.
    x0: f64,
    y0: f64,
    vx: f64,
    vy: f64,
    gait_phase: f64,
    histogram: Vec<f64>,
    /// Lower-triangular factor of the base color covariance.
    cov_factor: [[f64; 3]; 3],
    contrast: f64,
}

/// Position on a segment `[0, span]` for a point starting at `p0` moving at
/// `v`, reflecting at both ends.
fn bounce(p0: f64, v: f64, t: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * span;
    let p = (p0 + v * t).rem_euclid(period);
    if p <= span {
        p
    } else {
        period - p
    }
}

impl SimObject {
    fn bbox_at(&self, t: f64, fw: f64, fh: f64) -> BBox {
        // natural size fluctuation of a walking person
        let w = self.width * (1.0 + 0.06 * (self.gait_phase + 0.35 * t).sin());
        let h = self.height * (1.0 + 0.02 * (self.gait_phase + 0.35 * t).cos());
        let x = bounce(self.x0, self.vx, t, fw - w);
        let y = bounce(self.y0, self.vy, t, fh - h);
        BBox::new(x, y, w, h)
    }
}

fn bump(bins: usize, center: f64, width: f64) -> Vec<f64> {
    (0..bins)
        .map(|b| {
            let d = b as f64 - center;
            (-0.5 * d * d / (width * width)).exp()
        })
        .collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        let n = v.len() as f64;
        v.iter_mut().for_each(|x| *x = 1.0 / n);
    }
    v
}

/// Renormalizes so the entries sum to one up to the last ulp.
fn renormalize(v: Vec<f64>) -> Vec<f64> {
    let mut v = normalized(v);
    let s: f64 = v.iter().sum();
    if let Some(max_i) = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])) {
        v[max_i] += 1.0 - s;
    }
    v
}

fn top_k(hist: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..hist.len()).collect();
    idx.sort_by(|&a, &b| hist[b].total_cmp(&hist[a]).then(a.cmp(&b)));
    idx.into_iter()
        .take(k)
        .map(|i| (i, hist[i]))
        .filter(|p| p.1 > 0.0)
        .collect()
}

fn covariance_upper(l: &[[f64; 3]; 3]) -> [f64; 6] {
    let c = |i: usize, j: usize| (0..3).map(|k| l[i][k] * l[j][k]).sum::<f64>();
    [c(0, 0), c(0, 1), c(0, 2), c(1, 1), c(1, 2), c(2, 2)]
}

/// Observed appearance with log-normal perturbation of strength `noise`.
fn observe(obj: &SimObject, noise: f64, k: usize, rng: &mut ChaCha8Rng) -> Appearance {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let hist = if noise > 0.0 {
        renormalize(
            obj.histogram
                .iter()
                .map(|&v| v * (noise * normal.sample(rng)).exp())
                .collect(),
        )
    } else {
        obj.histogram.clone()
    };
    let mut l = obj.cov_factor;
    if noise > 0.0 {
        for row in &mut l {
            let s = (noise * normal.sample(rng)).exp();
            row.iter_mut().for_each(|x| *x *= s);
        }
    }
    let contrast = if noise > 0.0 {
        (obj.contrast + 0.1 * noise * normal.sample(rng)).clamp(0.0, 1.0)
    } else {
        obj.contrast
    };
    Appearance {
        dominant: top_k(&hist, k),
        histogram: hist,
        covariance: covariance_upper(&l),
        contrast,
    }
}

/// Adds `noise`-scale perturbation to an existing appearance.
fn perturb(app: &Appearance, noise: f64, k: usize, rng: &mut ChaCha8Rng) -> Appearance {
    if noise <= 0.0 {
        return app.clone();
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let hist = renormalize(
        app.histogram
            .iter()
            .map(|&v| v * (noise * normal.sample(rng)).exp())
            .collect(),
    );
    let s: [f64; 3] = std::array::from_fn(|_| (noise * normal.sample(rng)).exp());
    let c = &app.covariance;
    let covariance = [
        c[0] * s[0] * s[0],
        c[1] * s[0] * s[1],
        c[2] * s[0] * s[2],
        c[3] * s[1] * s[1],
        c[4] * s[1] * s[2],
        c[5] * s[2] * s[2],
    ];
    Appearance {
        dominant: top_k(&hist, k),
        histogram: hist,
        covariance,
        contrast: (app.contrast + 0.1 * noise * normal.sample(rng)).clamp(0.0, 1.0),
    }
}

fn random_cov_factor(rng: &mut ChaCha8Rng, scale: f64) -> [[f64; 3]; 3] {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        l[i][i] = scale * rng.random_range(0.5..1.5);
        for j in 0..i {
            l[i][j] = scale * rng.random_range(-0.4..0.4);
        }
    }
    l
}

fn make_objects(
    spec: &RegimeSpec,
    cfg: &SimConfig,
    next_object_id: &mut u64,
    rng: &mut ChaCha8Rng,
) -> Vec<SimObject> {
    let n = rng.random_range(spec.object_count.0..=spec.object_count.1);
    let bins = cfg.bins as f64;
    let palette: Vec<f64> = (0..3)
        .map(|_| bump(cfg.bins, rng.random_range(0.0..bins), spec.color_spread * 1.5))
        .fold(vec![0.0; cfg.bins], |acc, b| acc.iter().zip(&b).map(|(x, y)| x + y).collect());
    let palette = normalized(palette);
    let shared_cov = random_cov_factor(rng, 1.0);
    let sep = spec.appearance_separation;
    let lane_h = cfg.frame_height / n.max(1) as f64;
    let mut objects = Vec::with_capacity(n);
    for i in 0..n {
        let height = rng.random_range(spec.size_range.0..=spec.size_range.1) * cfg.frame_height;
        let width = height * rng.random_range(spec.aspect_range.0..=spec.aspect_range.1);
        let crossing = rng.random_bool(spec.occlusion_intensity);
        let speed = rng.random_range(1.0..3.0);
        let vx = if rng.random_bool(0.5) { speed } else { -speed };
        let vy = if crossing {
            rng.random_range(0.8..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
        } else {
            0.0
        };
        let lane_center = lane_h * (i as f64 + 0.5);
        let y0 = (lane_center - height / 2.0).clamp(0.0, (cfg.frame_height - height).max(0.0));
        let x0 = rng.random_range(0.0..(cfg.frame_width - width * 1.06).max(1.0));
        let own = normalized(
            bump(cfg.bins, rng.random_range(0.0..bins), spec.color_spread)
                .iter()
                .zip(&bump(cfg.bins, rng.random_range(0.0..bins), spec.color_spread))
                .map(|(a, b)| a + 0.5 * b)
                .collect(),
        );
        let histogram = normalized(
            palette
                .iter()
                .zip(&own)
                .map(|(p, o)| (1.0 - sep) * p + sep * o + 1e-4)
                .collect(),
        );
        let own_cov = random_cov_factor(rng, 1.0);
        let mut cov_factor = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                cov_factor[r][c] = (1.0 - sep) * shared_cov[r][c] + sep * own_cov[r][c];
            }
        }
        objects.push(SimObject {
            object_id: *next_object_id,
            width,
            height,
            x0,
            y0,
            vx,
            vy,
            gait_phase: rng.random_range(0.0..std::f64::consts::TAU),
            histogram,
            cov_factor,
            contrast: rng.random_range(spec.contrast_range.0..=spec.contrast_range.1),
        });
        *next_object_id += 1;
    }
    objects
}

/// Generates one sequence: regimes back to back, annotations exact and
/// detections derived from them through `noise`.
pub fn generate(
    cfg: &SimConfig,
    regimes: &[RegimeSpec],
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Sequence> {
    if regimes.is_empty() {
        return Err(Error::Infeasible("at least one regime is required".into()));
    }
    for r in regimes {
        r.validate()?;
    }
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fw, fh) = (cfg.frame_width, cfg.frame_height);
    let total: usize = regimes.iter().map(|r| r.duration_frames).sum();
    let mut seq = Sequence::new(fw, fh, total);
    seq.bins = cfg.bins;
    seq.dominant_k = cfg.dominant_k;
    let mut annotations: Vec<Vec<AnnotatedObject>> = vec![Vec::new(); total];
    let jitter = Normal::new(0.0, noise.jitter_std.max(f64::MIN_POSITIVE)).expect("finite std");

    let mut next_object_id = 1u64;
    let mut next_ann_id = 1u64;
    let mut next_det_id = 1u64;
    let mut frame0 = 0usize;
    for spec in regimes {
        let objects = make_objects(spec, cfg, &mut next_object_id, &mut rng);
        for t in 0..spec.duration_frames {
            let frame = frame0 + t;
            let mut visible: Vec<AnnotatedObject> = Vec::with_capacity(objects.len());
            for obj in &objects {
                let Some(bbox) = obj.bbox_at(t as f64, fw, fh).clamp_to(fw, fh) else {
                    continue;
                };
                let appearance = observe(obj, spec.appearance_variability, cfg.dominant_k, &mut rng);
                visible.push(AnnotatedObject {
                    detection: Detection {
                        frame,
                        id: 0,
                        bbox,
                        appearance,
                    },
                    object_id: obj.object_id,
                });
            }
            // listing order must not reveal identity
            visible.shuffle(&mut rng);
            for a in &mut visible {
                a.detection.id = next_ann_id;
                next_ann_id += 1;
            }

            let mut dets = Vec::new();
            for (i, ann) in visible.iter().enumerate() {
                let b = ann.detection.bbox;
                // objects lower in the image are closer to the camera
                let hidden = visible
                    .iter()
                    .enumerate()
                    .filter(|&(j, o)| j != i && o.detection.bbox.bottom() > b.bottom())
                    .map(|(_, o)| intersection_area(&o.detection.bbox, &b))
                    .fold(0.0, f64::max)
                    / b.area();
                let p_keep = (1.0 - noise.miss_probability) * (1.0 - hidden.clamp(0.0, 1.0));
                if !rng.random_bool(p_keep.clamp(0.0, 1.0)) {
                    continue;
                }
                let jb = if noise.jitter_std > 0.0 {
                    BBox::new(
                        b.x + jitter.sample(&mut rng),
                        b.y + jitter.sample(&mut rng),
                        (b.w + jitter.sample(&mut rng)).max(1.0),
                        (b.h + jitter.sample(&mut rng)).max(1.0),
                    )
                } else {
                    b
                };
                let Some(bbox) = jb.clamp_to(fw, fh) else { continue };
                dets.push(Detection {
                    frame,
                    id: next_det_id,
                    bbox,
                    appearance: perturb(
                        &ann.detection.appearance,
                        noise.appearance_noise_std,
                        cfg.dominant_k,
                        &mut rng,
                    ),
                });
                next_det_id += 1;
            }

            let fp_whole = noise.false_positive_rate.floor() as usize;
            let fp_extra = rng.random_bool(noise.false_positive_rate.fract());
            for _ in 0..fp_whole + usize::from(fp_extra) {
                let h = rng.random_range(0.05..0.3) * fh;
                let w = h * rng.random_range(0.3..0.8);
                let b = BBox::new(rng.random_range(0.0..fw - w), rng.random_range(0.0..fh - h), w, h);
                let hist = renormalize(bump(
                    cfg.bins,
                    rng.random_range(0.0..cfg.bins as f64),
                    rng.random_range(1.0..6.0),
                ));
                dets.push(Detection {
                    frame,
                    id: next_det_id,
                    bbox: b,
                    appearance: Appearance {
                        dominant: top_k(&hist, cfg.dominant_k),
                        histogram: hist,
                        covariance: covariance_upper(&random_cov_factor(&mut rng, 1.0)),
                        contrast: rng.random_range(0.0..1.0),
                    },
                });
                next_det_id += 1;
            }
            seq.frames[frame] = dets;
            annotations[frame] = visible;
        }
        frame0 += spec.duration_frames;
    }
    seq.annotations = Some(annotations);
    Ok(seq)
}
