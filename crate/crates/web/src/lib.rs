//! Browser bindings for the demo page. Each export returns a JSON string; the
//! plain-Rust versions in this module are what the native tests exercise.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ctxtrack::config::Config;
use ctxtrack::controller::Decision;
use ctxtrack::features::{extract_context, ContextSample, FeatureSource};
use ctxtrack::metrics::TrackEvalReport;
use ctxtrack::optimizer::{adaboost_weights, build_link_samples, optimize_segment, BoostRound};
use ctxtrack::pipeline::{run_compare_experiment, run_learn_pipeline, training_corpus, ClusterSummary};
use ctxtrack::segmentation::segment_context;
use ctxtrack::sim::{preset_scenarios, scenario};
use ctxtrack::tracker::Weights;

/// Largest training corpus the page may request per scenario.
pub const MAX_TRAINING_SEEDS: u64 = 4;

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioInfo {
    pub name: String,
    pub description: String,
    pub frames: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioView {
    pub name: String,
    pub frame_width: f64,
    pub frame_height: f64,
    /// Annotated boxes per frame as `[x, y, w, h, objectId]`.
    pub boxes: Vec<Vec<[f64; 5]>>,
    pub samples: Vec<ContextSample>,
    pub switches: Vec<usize>,
    pub segments: Vec<SegmentSpan>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnView {
    pub start: usize,
    pub end: usize,
    pub weights: Weights,
    pub informative: bool,
    pub quality: f64,
    pub satisfied: bool,
    pub rounds: Vec<BoostRound>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CompareView {
    pub training_sequences: usize,
    pub clusters: Vec<ClusterSummary>,
    pub frames: usize,
    pub fixed: TrackEvalReport,
    pub adaptive: TrackEvalReport,
    pub decisions: Vec<Decision>,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("views are always serializable")
}

pub fn scenario_list() -> String {
    let list: Vec<ScenarioInfo> = preset_scenarios()
        .into_iter()
        .map(|s| ScenarioInfo {
            frames: s.total_frames(),
            name: s.name,
            description: s.description,
        })
        .collect();
    to_json(&list)
}

/// Simulates a preset and segments its annotated context.
pub fn scenario_view(name: &str, seed: u64, th1: f64) -> Result<String, String> {
    let cfg = Config { th1, ..Config::default() };
    cfg.validate().map_err(|e| e.to_string())?;
    let sc = scenario(name).map_err(|e| e.to_string())?;
    let seq = sc.generate(seed).map_err(|e| e.to_string())?;
    let ann = seq.annotations.as_ref().expect("simulated sequences are annotated");
    let boxes = ann
        .iter()
        .map(|objs| {
            objs.iter()
                .map(|o| {
                    let b = o.detection.bbox;
                    [b.x, b.y, b.w, b.h, o.object_id as f64]
                })
                .collect()
        })
        .collect();
    let samples = extract_context(&seq, FeatureSource::Annotations, 0, seq.len())
        .map_err(|e| e.to_string())?
        .samples;
    let segments = segment_context(&seq, cfg.segmentation())
        .map_err(|e| e.to_string())?
        .iter()
        .map(|s| SegmentSpan { start: s.start_frame, end: s.end_frame })
        .collect();
    Ok(to_json(&ScenarioView {
        name: sc.name.clone(),
        frame_width: seq.frame_width,
        frame_height: seq.frame_height,
        boxes,
        samples,
        switches: sc.switch_frames(),
        segments,
    }))
}

/// Boosts descriptor weights on frames `[start, end]` of a preset.
pub fn learn_view(name: &str, seed: u64, start: usize, end: usize) -> Result<String, String> {
    let cfg = Config::default();
    let seq = scenario(name)
        .and_then(|s| s.generate(seed))
        .map_err(|e| e.to_string())?;
    if start > end || end >= seq.len() {
        return Err(format!("range {start}..={end} outside 0..{}", seq.len()));
    }
    let opt = cfg.optimizer();
    let samples = build_link_samples(&seq, start, end, &opt.samples).map_err(|e| e.to_string())?;
    let rounds = adaboost_weights(&samples, opt.rounds)
        .map(|o| o.rounds)
        .unwrap_or_default();
    let out = optimize_segment(&seq, start, end, &opt).map_err(|e| e.to_string())?;
    Ok(to_json(&LearnView {
        start,
        end,
        weights: out.weights,
        informative: out.informative,
        quality: out.achieved_quality,
        satisfied: out.satisfied,
        rounds,
    }))
}

/// Learns a database from `per_scenario` training seeds, then tracks a
/// preset with uniform weights and with the controller.
pub fn compare_view(name: &str, seed: u64, per_scenario: u64) -> Result<String, String> {
    if !(1..=MAX_TRAINING_SEEDS).contains(&per_scenario) {
        return Err(format!("training seeds must lie in 1..={MAX_TRAINING_SEEDS}"));
    }
    let cfg = Config::default();
    let corpus = training_corpus(&cfg, per_scenario).map_err(|e| e.to_string())?;
    let (db, summary) = run_learn_pipeline(&corpus, &cfg).map_err(|e| e.to_string())?;
    let seq = scenario(name)
        .and_then(|s| s.generate(seed))
        .map_err(|e| e.to_string())?;
    let r = run_compare_experiment(&seq, &db, &cfg, seed).map_err(|e| e.to_string())?;
    Ok(to_json(&CompareView {
        training_sequences: corpus.len(),
        clusters: summary.clusters,
        frames: r.frames,
        fixed: r.fixed,
        adaptive: r.adaptive,
        decisions: r.decisions,
    }))
}

#[wasm_bindgen(js_name = scenarioList)]
pub fn js_scenario_list() -> String {
    scenario_list()
}

#[wasm_bindgen(js_name = scenarioView)]
pub fn js_scenario_view(name: &str, seed: u32, th1: f64) -> Result<String, JsError> {
    scenario_view(name, seed.into(), th1).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = learnView)]
pub fn js_learn_view(name: &str, seed: u32, start: u32, end: u32) -> Result<String, JsError> {
    learn_view(name, seed.into(), start as usize, end as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = compareView)]
pub fn js_compare_view(name: &str, seed: u32, per_scenario: u32) -> Result<String, JsError> {
    compare_view(name, seed.into(), per_scenario.into()).map_err(|e| JsError::new(&e))
}
