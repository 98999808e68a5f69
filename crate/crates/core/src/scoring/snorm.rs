//! Adaptive symmetric score normalization against an imposter cohort.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::embedding::{EmbeddingSet, ScoreEntry, ScoreSet};
use crate::{Error, Result};

pub const DEFAULT_TOP_K: usize = 200;

#[derive(Debug, Clone)]
pub struct Cohort {
    embeddings: EmbeddingSet,
    /// Number of highest cohort scores kept per side; 0 keeps all.
    top_k: usize,
}

impl Cohort {
    pub fn new(embeddings: EmbeddingSet, top_k: usize) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::InsufficientData("empty cohort".into()));
        }
        Ok(Cohort { embeddings, top_k })
    }

    pub fn embeddings(&self) -> &EmbeddingSet {
        &self.embeddings
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    /// Same settings, transformed vectors.
    pub fn with_embeddings(&self, embeddings: EmbeddingSet) -> Result<Cohort> {
        Cohort::new(embeddings, self.top_k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortStats {
    pub mean: f64,
    pub std: f64,
}

impl CohortStats {
    /// Mean and population standard deviation of the `top_k` largest scores.
    pub fn from_scores(mut scores: Vec<f64>, top_k: usize, utt: &str) -> Result<Self> {
        if top_k > 0 && top_k < scores.len() {
            scores.sort_by(|a, b| b.total_cmp(a));
            scores.truncate(top_k);
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std.is_nan() || std <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::DegenerateCohort(utt.to_string()));
        }
        Ok(CohortStats { mean, std })
    }
}

/// `((s - mu_e) / sigma_e + (s - mu_t) / sigma_t) / 2`
pub fn snorm_score(raw: f64, enroll: CohortStats, test: CohortStats) -> f64 {
    0.5 * ((raw - enroll.mean) / enroll.std + (raw - test.mean) / test.std)
}

/// Normalizes every score of `raw` with cohort statistics of its enrollment
/// side (`score_fn(e, c)`) and test side (`score_fn(c, t)`).
pub fn snorm<F>(
    raw: &ScoreSet,
    score_fn: F,
    enroll: &EmbeddingSet,
    test: &EmbeddingSet,
    cohort: &Cohort,
) -> Result<ScoreSet>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    for set in [enroll, test] {
        if set.dim() != cohort.dim() {
            return Err(Error::DimensionMismatch {
                expected: cohort.dim(),
                found: set.dim(),
            });
        }
    }
    let mut enroll_ids: Vec<&str> = raw.entries().iter().map(|e| e.enroll_utt.as_str()).collect();
    let mut test_ids: Vec<&str> = raw.entries().iter().map(|e| e.test_utt.as_str()).collect();
    enroll_ids.sort_unstable();
    enroll_ids.dedup();
    test_ids.sort_unstable();
    test_ids.dedup();

    let side_stats = |ids: &[&str], set: &EmbeddingSet, enroll_side: bool| {
        ids.par_iter()
            .map(|&id| {
                let v = set.vector(id)?;
                let scores = cohort
                    .embeddings
                    .iter()
                    .map(|c| {
                        if enroll_side {
                            score_fn(v, &c.vector)
                        } else {
                            score_fn(&c.vector, v)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((id.to_string(), CohortStats::from_scores(scores, cohort.top_k, id)?))
            })
            .collect::<Result<HashMap<String, CohortStats>>>()
    };
    let e_stats = side_stats(&enroll_ids, enroll, true)?;
    let t_stats = side_stats(&test_ids, test, false)?;

    let entries = raw
        .entries()
        .iter()
        .map(|e| ScoreEntry {
            score: snorm_score(e.score, e_stats[e.enroll_utt.as_str()], t_stats[e.test_utt.as_str()]),
            ..e.clone()
        })
        .collect();
    ScoreSet::new(entries)
}
