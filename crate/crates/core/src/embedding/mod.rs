//! Embeddings, trials and scores.

mod io;

use std::collections::HashMap;

use crate::{Error, Result};

pub use io::{
    load_embeddings, load_scores, load_trials, save_embeddings, save_scores, save_trials,
};

/// Speaker id sentinel used in files for "unknown speaker".
pub const UNKNOWN_SPEAKER: &str = "-";

/// One utterance's embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub utterance_id: String,
    pub speaker_id: Option<String>,
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn new(
        utterance_id: impl Into<String>,
        speaker_id: Option<String>,
        vector: Vec<f64>,
    ) -> Self {
        Embedding {
            utterance_id: utterance_id.into(),
            speaker_id,
            vector,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// Same ids, new coordinates.
    pub fn with_vector(&self, vector: Vec<f64>) -> Embedding {
        Embedding {
            utterance_id: self.utterance_id.clone(),
            speaker_id: self.speaker_id.clone(),
            vector,
        }
    }
}

/// An ordered collection of equal-dimension embeddings with unique utterance ids.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    dim: usize,
    items: Vec<Embedding>,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.items == other.items
    }
}

impl EmbeddingSet {
    pub fn new(dim: usize, items: Vec<Embedding>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be >= 1".into()));
        }
        let mut index = HashMap::with_capacity(items.len());
        for (i, e) in items.iter().enumerate() {
            if e.utterance_id.is_empty() {
                return Err(Error::InvalidConfig(format!("item {i} has an empty utterance id")));
            }
            if e.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.vector.len(),
                });
            }
            if let Some(bad) = e.vector.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "utterance {} has non-finite component {bad}",
                    e.utterance_id
                )));
            }
            if index.insert(e.utterance_id.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate utterance id {}",
                    e.utterance_id
                )));
            }
        }
        Ok(EmbeddingSet { dim, items, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Embedding] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Embedding> {
        self.items.iter()
    }

    pub fn into_items(self) -> Vec<Embedding> {
        self.items
    }

    pub fn get(&self, utterance_id: &str) -> Option<&Embedding> {
        self.index.get(utterance_id).map(|&i| &self.items[i])
    }

    pub fn vector(&self, utterance_id: &str) -> Result<&[f64]> {
        self.get(utterance_id)
            .map(|e| e.vector.as_slice())
            .ok_or_else(|| Error::MissingUtterance(utterance_id.to_string()))
    }

    /// Applies `f` to every vector, keeping ids and order.
    pub fn try_map_vectors<F>(&self, mut f: F) -> Result<EmbeddingSet>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let mut items = Vec::with_capacity(self.items.len());
        let mut dim = None;
        for e in &self.items {
            let v = f(&e.vector)?;
            dim.get_or_insert(v.len());
            items.push(e.with_vector(v));
        }
        EmbeddingSet::new(dim.unwrap_or(self.dim), items)
    }

    /// Keeps the items for which `keep` holds, in order.
    pub fn filter<F: FnMut(&Embedding) -> bool>(&self, mut keep: F) -> EmbeddingSet {
        let items: Vec<_> = self.items.iter().filter(|e| keep(e)).cloned().collect();
        EmbeddingSet::new(self.dim, items).expect("subset of a valid set is valid")
    }

    /// Concatenates two sets of the same dimension.
    pub fn concat(&self, other: &EmbeddingSet) -> Result<EmbeddingSet> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut items = self.items.clone();
        items.extend(other.items.iter().cloned());
        EmbeddingSet::new(self.dim, items)
    }
}

impl<'a> IntoIterator for &'a EmbeddingSet {
    type Item = &'a Embedding;
    type IntoIter = std::slice::Iter<'a, Embedding>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Target,
    Nontarget,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Target => "target",
            Label::Nontarget => "nontarget",
        }
    }

    pub fn parse(token: &str) -> Option<Label> {
        match token {
            "target" => Some(Label::Target),
            "nontarget" => Some(Label::Nontarget),
            _ => None,
        }
    }

    pub fn from_same_speaker(same: bool) -> Label {
        if same {
            Label::Target
        } else {
            Label::Nontarget
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enroll_utt: String,
    pub test_utt: String,
    pub label: Option<Label>,
}

impl Trial {
    pub fn new(enroll: impl Into<String>, test: impl Into<String>, label: Option<Label>) -> Self {
        Trial {
            enroll_utt: enroll.into(),
            test_utt: test.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub enroll_utt: String,
    pub test_utt: String,
    pub score: f64,
    pub label: Option<Label>,
}

/// Scored trials. Scores are finite and (enroll, test) pairs are unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    entries: Vec<ScoreEntry>,
}

impl ScoreSet {
    pub fn new(entries: Vec<ScoreEntry>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for e in &entries {
            if !e.score.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "non-finite score for trial {} {}",
                    e.enroll_utt, e.test_utt
                )));
            }
            if !seen.insert((e.enroll_utt.as_str(), e.test_utt.as_str())) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate trial {} {}",
                    e.enroll_utt, e.test_utt
                )));
            }
        }
        Ok(ScoreSet { entries })
    }

    /// Builds a labeled set from raw `(score, is_target)` pairs with synthetic ids.
    pub fn from_labeled(scores: &[(f64, bool)]) -> Result<Self> {
        let entries = scores
            .iter()
            .enumerate()
            .map(|(i, &(score, target))| ScoreEntry {
                enroll_utt: format!("e{i}"),
                test_utt: format!("t{i}"),
                score,
                label: Some(Label::from_same_speaker(target)),
            })
            .collect();
        ScoreSet::new(entries)
    }

    pub fn entries(&self) -> &[ScoreEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Attaches labels from a trial list, matching on (enroll, test).
    pub fn with_labels_from(&self, trials: &[Trial]) -> ScoreSet {
        let lookup: HashMap<(&str, &str), Option<Label>> = trials
            .iter()
            .map(|t| ((t.enroll_utt.as_str(), t.test_utt.as_str()), t.label))
            .collect();
        let entries = self
            .entries
            .iter()
            .map(|e| ScoreEntry {
                label: lookup
                    .get(&(e.enroll_utt.as_str(), e.test_utt.as_str()))
                    .copied()
                    .flatten()
                    .or(e.label),
                ..e.clone()
            })
            .collect();
        ScoreSet { entries }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of the angle between `a` and `b`, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::ZeroVector);
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn length_normalize_vector(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

pub fn length_normalize(e: &Embedding) -> Result<Embedding> {
    Ok(e.with_vector(length_normalize_vector(&e.vector)?))
}
