//! Code-book representation of a context and the chunk-to-model distance.
//!
//! Each of the six features owns a code-book: a list of code-words
//! `{mean, min, max, freq}`. A context model is the six code-books together.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ContextChunk, FEATURE_COUNT};

/// Share of a feature's values that must match some code-word; below it the
/// distance is 1 outright.
pub const MIN_MATCH_RATIO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeWord {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub freq: u64,
}

impl CodeWord {
    pub fn seed(value: f64) -> Self {
        Self {
            mean: value,
            min: value,
            max: value,
            freq: 1,
        }
    }

    fn can_absorb(&self, value: f64, eps: f64) -> bool {
        let n = self.freq as f64;
        let mean = (self.mean * n + value) / (n + 1.0);
        word_distance(self.min.min(value), mean) < eps
            && word_distance(self.max.max(value), mean) < eps
    }

    fn absorb(&mut self, value: f64) {
        let n = self.freq as f64;
        self.mean = (self.mean * n + value) / (n + 1.0);
        // keep min <= mean <= max under rounding
        self.min = self.min.min(value).min(self.mean);
        self.max = self.max.max(value).max(self.mean);
        self.freq += 1;
    }
}

/// Ratio distance between a feature value and a code-word mean:
/// `1 - min/max`, zero when both are zero.
pub fn word_distance(value: f64, mean: f64) -> f64 {
    let hi = value.max(mean);
    if hi <= 0.0 {
        return 0.0;
    }
    1.0 - value.min(mean) / hi
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureCodeBook {
    pub words: Vec<CodeWord>,
}

impl FeatureCodeBook {
    /// Inserts `value`: the closest word within `eps` absorbs it, otherwise a
    /// new word is appended. Ties go to the earliest word.
    ///
    /// A word only absorbs a value when its extended `[min, max]` stays within
    /// `eps` of the updated mean, so every value a word holds keeps matching it.
    pub fn update(&mut self, value: f64, eps: f64) {
        let closest = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (i, word_distance(value, w.mean)))
            .filter(|&(i, d)| d < eps && self.words[i].can_absorb(value, eps))
            .fold(None::<(usize, f64)>, |best, cur| match best {
                Some(b) if b.1 <= cur.1 => Some(b),
                _ => Some(cur),
            });
        match closest {
            Some((i, _)) => self.words[i].absorb(value),
            None => self.words.push(CodeWord::seed(value)),
        }
    }

    /// True when some word lies within `eps` of `value`.
    pub fn matches(&self, value: f64, eps: f64) -> bool {
        self.words.iter().any(|w| word_distance(value, w.mean) < eps)
    }

    pub fn total_freq(&self) -> u64 {
        self.words.iter().map(|w| w.freq).sum()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Six feature code-books, in the fixed feature order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextModel {
    pub books: [FeatureCodeBook; FEATURE_COUNT],
    pub support_frames: u64,
}

impl ContextModel {
    pub fn build(chunk: &ContextChunk, eps: f64) -> Result<Self> {
        if chunk.is_empty() {
            return Err(Error::Empty("cannot build a code-book model from an empty chunk".into()));
        }
        let mut model = ContextModel::default();
        model.absorb(chunk, eps);
        Ok(model)
    }

    /// Folds every present value of `chunk` into the code-books.
    pub fn absorb(&mut self, chunk: &ContextChunk, eps: f64) {
        for s in &chunk.samples {
            for (k, v) in s.features().into_iter().enumerate() {
                if let Some(v) = v {
                    self.books[k].update(v, eps);
                }
            }
        }
        self.support_frames += chunk.len() as u64;
    }

    pub fn word_counts(&self) -> [usize; FEATURE_COUNT] {
        std::array::from_fn(|k| self.books[k].len())
    }

    /// Distance of a chunk to this model.
    pub fn distance(&self, chunk: &ContextChunk, eps: f64) -> f64 {
        let values: [Vec<f64>; FEATURE_COUNT] = std::array::from_fn(|k| chunk.values(k));
        distance_from_values(&values, self, eps)
    }
}

/// Chunk-to-model distance on per-feature value lists.
///
/// Per feature, counts the values matching some code-word (`word_distance < eps`).
/// A feature whose match ratio falls under [`MIN_MATCH_RATIO`] makes the
/// distance 1. Otherwise the result is one minus the overall match ratio.
/// Features with no values on either side are skipped; a feature with values
/// on only one side counts as a full mismatch.
pub fn distance_from_values(
    values: &[Vec<f64>; FEATURE_COUNT],
    model: &ContextModel,
    eps: f64,
) -> f64 {
    books_distance(values, &model.books, eps)
}

/// [`distance_from_values`] on bare code-books.
pub fn books_distance(
    values: &[Vec<f64>; FEATURE_COUNT],
    books: &[FeatureCodeBook; FEATURE_COUNT],
    eps: f64,
) -> f64 {
    let mut matched_total = 0usize;
    let mut seen_total = 0usize;
    for (vals, book) in values.iter().zip(books) {
        if vals.is_empty() && book.is_empty() {
            continue;
        }
        if vals.is_empty() || book.is_empty() {
            return 1.0;
        }
        let matched = vals.iter().filter(|&&v| book.matches(v, eps)).count();
        if (matched as f64) / (vals.len() as f64) < MIN_MATCH_RATIO {
            return 1.0;
        }
        matched_total += matched;
        seen_total += vals.len();
    }
    if seen_total == 0 {
        return 0.0;
    }
    1.0 - matched_total as f64 / seen_total as f64
}

pub fn context_distance(chunk: &ContextChunk, model: &ContextModel, eps: f64) -> f64 {
    model.distance(chunk, eps)
}
