//! Quality-threshold clustering of learned contexts and the learned database.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codebook::{books_distance, distance_from_values, ContextModel, FeatureCodeBook};
use crate::error::{Error, Result};
use crate::features::{ContextChunk, FEATURE_COUNT, FEATURE_NAMES};
use crate::optimizer::SatisfactoryParams;
use crate::tracker::{normalize_weights, Weights, DESCRIPTOR_COUNT};

pub const DB_SCHEMA: &str = "ctxtrack-db/1";

/// Pseudo-samples generated per code-word when comparing two models.
pub const MAX_PSEUDO_SAMPLES: u64 = 100;

/// Where a learned context came from. Orders by sequence name, then segment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceId {
    pub sequence: String,
    pub segment: usize,
}

impl SourceId {
    pub fn new(sequence: impl Into<String>, segment: usize) -> Self {
        Self {
            sequence: sequence.into(),
            segment,
        }
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.sequence, self.segment)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnedContext {
    pub source: SourceId,
    pub start_frame: usize,
    pub end_frame: usize,
    pub model: ContextModel,
    pub params: SatisfactoryParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnedCluster {
    pub cluster_id: u64,
    pub weights: Weights,
    pub member_ids: Vec<SourceId>,
    pub support_frames: u64,
    pub codebooks: [FeatureCodeBook; FEATURE_COUNT],
}

impl LearnedCluster {
    pub fn model(&self) -> ContextModel {
        ContextModel {
            books: self.codebooks.clone(),
            support_frames: self.support_frames,
        }
    }

    /// Chunk-to-cluster distance without cloning the code-books.
    pub fn distance(&self, chunk: &ContextChunk, eps: f64) -> f64 {
        let values: [Vec<f64>; FEATURE_COUNT] = std::array::from_fn(|k| chunk.values(k));
        self.distance_from_values(&values, eps)
    }

    pub fn distance_from_values(&self, values: &[Vec<f64>; FEATURE_COUNT], eps: f64) -> f64 {
        books_distance(values, &self.codebooks, eps)
    }
}

/// Each word's mean repeated `min(freq, 100)` times, per feature.
pub fn pseudo_samples(model: &ContextModel) -> [Vec<f64>; FEATURE_COUNT] {
    std::array::from_fn(|k| {
        model.books[k]
            .words
            .iter()
            .flat_map(|w| std::iter::repeat_n(w.mean, w.freq.min(MAX_PSEUDO_SAMPLES) as usize))
            .collect()
    })
}

/// Symmetric model-to-model distance: each model's pseudo-samples are scored
/// against the other model and the two distances averaged.
pub fn context_to_context_distance(a: &ContextModel, b: &ContextModel, eps: f64) -> f64 {
    let ab = distance_from_values(&pseudo_samples(a), b, eps);
    let ba = distance_from_values(&pseudo_samples(b), a, eps);
    0.5 * (ab + ba)
}

/// Pairwise distance matrix over `models`.
pub fn distance_matrix(models: &[&ContextModel], eps: f64) -> Vec<Vec<f64>> {
    let n = models.len();
    let samples: Vec<_> = models.iter().map(|m| pseudo_samples(m)).collect();
    let one_way = |i: usize, j: usize| distance_from_values(&samples[i], models[j], eps);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let compute = |&(i, j): &(usize, usize)| 0.5 * (one_way(i, j) + one_way(j, i));
    #[cfg(feature = "parallel")]
    let values: Vec<f64> = {
        use rayon::prelude::*;
        pairs.par_iter().map(compute).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = pairs.iter().map(compute).collect();
    let mut d = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        d[i][j] = v;
        d[j][i] = v;
    }
    d
}

/// QT clustering on a precomputed symmetric distance matrix. Points are
/// identified by index; lower indices win every tie.
///
/// Each remaining point seeds a candidate that greedily takes the point
/// keeping the diameter smallest, as long as it stays `<= th1`. The largest
/// candidate becomes a cluster and its members leave the pool.
pub fn qt_groups(dist: &[Vec<f64>], th1: f64) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..dist.len()).collect();
    let mut groups = Vec::new();
    while !remaining.is_empty() {
        let mut best: Vec<usize> = Vec::new();
        for &seed in &remaining {
            let candidate = grow_candidate(dist, &remaining, seed, th1);
            if candidate.len() > best.len() {
                best = candidate;
            }
        }
        remaining.retain(|i| !best.contains(i));
        best.sort_unstable();
        groups.push(best);
    }
    groups
}

fn grow_candidate(dist: &[Vec<f64>], pool: &[usize], seed: usize, th1: f64) -> Vec<usize> {
    let mut members = vec![seed];
    let mut diameter = 0.0f64;
    // farthest distance from each pool point to the current members
    let mut reach: Vec<f64> = pool.iter().map(|&p| dist[seed][p]).collect();
    loop {
        let mut pick: Option<(usize, f64)> = None;
        for (slot, &p) in pool.iter().enumerate() {
            if members.contains(&p) {
                continue;
            }
            let grown = diameter.max(reach[slot]);
            if grown > th1 {
                continue;
            }
            if pick.is_none_or(|(_, d)| grown < d) {
                pick = Some((slot, grown));
            }
        }
        let Some((slot, grown)) = pick else { break };
        let p = pool[slot];
        members.push(p);
        diameter = grown;
        for (s, &q) in pool.iter().enumerate() {
            reach[s] = reach[s].max(dist[p][q]);
        }
    }
    members
}

/// Largest pairwise distance inside a group.
pub fn diameter(dist: &[Vec<f64>], group: &[usize]) -> f64 {
    group
        .iter()
        .flat_map(|&i| group.iter().map(move |&j| dist[i][j]))
        .fold(0.0, f64::max)
}

/// Clusters the satisfied contexts and fuses each group. Unsatisfied contexts
/// are ignored. Cluster ids are assigned in output order starting at 0.
pub fn qt_cluster(contexts: &[LearnedContext], th1: f64, eps: f64) -> Result<Vec<LearnedCluster>> {
    let mut satisfied: Vec<&LearnedContext> = contexts.iter().filter(|c| c.params.satisfied).collect();
    if satisfied.is_empty() {
        return Err(Error::Empty("no satisfied context to cluster".into()));
    }
    satisfied.sort_by(|a, b| a.source.cmp(&b.source));
    let models: Vec<&ContextModel> = satisfied.iter().map(|c| &c.model).collect();
    let dist = distance_matrix(&models, eps);
    qt_groups(&dist, th1)
        .into_iter()
        .enumerate()
        .map(|(id, group)| {
            let members: Vec<LearnedContext> = group.iter().map(|&i| satisfied[i].clone()).collect();
            fuse_cluster(id as u64, &members)
        })
        .collect()
}

/// Union of the satisfied members' code-words, with weights averaged by
/// support frames and renormalized.
pub fn fuse_cluster(cluster_id: u64, members: &[LearnedContext]) -> Result<LearnedCluster> {
    let satisfied: Vec<&LearnedContext> = members.iter().filter(|m| m.params.satisfied).collect();
    if satisfied.is_empty() {
        return Err(Error::Empty(format!("cluster {cluster_id} has no satisfied member")));
    }
    let mut codebooks: [FeatureCodeBook; FEATURE_COUNT] = Default::default();
    let mut support = 0u64;
    let mut weighted = [0.0; DESCRIPTOR_COUNT];
    for m in &satisfied {
        for (book, src) in codebooks.iter_mut().zip(&m.model.books) {
            book.words.extend_from_slice(&src.words);
        }
        support += m.model.support_frames;
        for (acc, w) in weighted.iter_mut().zip(&m.params.weights) {
            *acc += m.model.support_frames as f64 * w;
        }
    }
    let weights = if support == 0 {
        let n = satisfied.len() as f64;
        normalize_weights(std::array::from_fn(|k| {
            satisfied.iter().map(|m| m.params.weights[k]).sum::<f64>() / n
        }))
    } else {
        normalize_weights(weighted.map(|x| x / support as f64))
    };
    Ok(LearnedCluster {
        cluster_id,
        weights,
        member_ids: satisfied.iter().map(|m| m.source.clone()).collect(),
        support_frames: support,
        codebooks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnedDatabase {
    pub schema: String,
    #[serde(rename = "Th1")]
    pub th1: f64,
    pub eps: f64,
    pub l: usize,
    pub features: Vec<String>,
    pub clusters: Vec<LearnedCluster>,
    /// Contexts whose learned weights missed the quality threshold.
    #[serde(default)]
    pub unsatisfied: Vec<LearnedContext>,
    /// Online chunks no cluster accepted, kept for a later learning session.
    #[serde(rename = "pendingChunks", default)]
    pub pending_chunks: Vec<ContextChunk>,
}

impl LearnedDatabase {
    pub fn new(th1: f64, eps: f64, l: usize) -> Self {
        Self {
            schema: DB_SCHEMA.to_string(),
            th1,
            eps,
            l,
            features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            clusters: Vec::new(),
            unsatisfied: Vec::new(),
            pending_chunks: Vec::new(),
        }
    }

    /// Clusters `contexts` into a fresh database.
    pub fn from_contexts(contexts: &[LearnedContext], th1: f64, eps: f64, l: usize) -> Result<Self> {
        let mut db = Self::new(th1, eps, l);
        db.clusters = qt_cluster(contexts, th1, eps)?;
        db.unsatisfied = contexts.iter().filter(|c| !c.params.satisfied).cloned().collect();
        db.unsatisfied.sort_by(|a, b| a.source.cmp(&b.source));
        Ok(db)
    }

    pub fn cluster(&self, id: u64) -> Option<&LearnedCluster> {
        self.clusters.iter().find(|c| c.cluster_id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema != DB_SCHEMA {
            return Err(Error::Schema {
                expected: DB_SCHEMA.into(),
                found: self.schema.clone(),
            });
        }
        if self.features.len() != FEATURE_COUNT
            || self.features.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b)
        {
            return bad(format!("feature order {:?} differs from {:?}", self.features, FEATURE_NAMES));
        }
        let mut ids: Vec<u64> = self.clusters.iter().map(|c| c.cluster_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate cluster id".into());
        }
        for c in &self.clusters {
            let sum: f64 = c.weights.iter().sum();
            if c.weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return bad(format!("cluster {} weights are not normalized", c.cluster_id));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("<missing>");
        if found != DB_SCHEMA {
            return Err(Error::Schema {
                expected: DB_SCHEMA.into(),
                found: found.into(),
            });
        }
        let db: LearnedDatabase = serde_json::from_value(value)?;
        db.validate()?;
        Ok(db)
    }
}

pub fn save_database(db: &LearnedDatabase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, db.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_database(path: impl AsRef<Path>) -> Result<LearnedDatabase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LearnedDatabase::from_json(&text)
}

/// Deterministic total order on distances, lowest id first on ties.
pub(crate) fn closer(a: (f64, u64), b: (f64, u64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}
