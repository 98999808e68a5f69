use std::collections::HashMap;

use rayon::prelude::*;

use super::plda::PldaScorer;
use super::snorm::{snorm, Cohort};
use crate::embedding::{cosine_similarity, length_normalize_vector, EmbeddingSet, ScoreEntry, ScoreSet, Trial};
use crate::svr::MlpParameters;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub enum Backend {
    Cosine,
    Plda(PldaScorer),
}

impl Backend {
    pub fn score(&self, e: &[f64], t: &[f64]) -> Result<f64> {
        match self {
            Backend::Cosine => cosine_similarity(e, t),
            Backend::Plda(s) => s.score(e, t),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreOptions<'a> {
    pub reconstruct_enroll: bool,
    pub reconstruct_test: bool,
    /// Also pass cohort embeddings through the network before normalization.
    pub reconstruct_cohort: bool,
    pub svr: Option<&'a MlpParameters>,
    pub snorm: Option<&'a Cohort>,
    /// Length-normalize every vector (after reconstruction) before scoring.
    pub length_normalize: bool,
}

fn prepare(
    set: &EmbeddingSet,
    ids: &[&str],
    reconstruct: Option<&MlpParameters>,
    length_normalize: bool,
) -> Result<EmbeddingSet> {
    let mut items = Vec::with_capacity(ids.len());
    for &id in ids {
        let e = set.get(id).ok_or_else(|| Error::MissingUtterance(id.to_string()))?;
        let mut v = match reconstruct {
            Some(p) => p.forward(&e.vector)?,
            None => e.vector.clone(),
        };
        if length_normalize {
            v = length_normalize_vector(&v)?;
        }
        items.push(e.with_vector(v));
    }
    let dim = items.first().map_or(set.dim(), |e| e.vector.len());
    EmbeddingSet::new(dim, items)
}

fn transform_all(
    set: &EmbeddingSet,
    reconstruct: Option<&MlpParameters>,
    length_normalize: bool,
) -> Result<EmbeddingSet> {
    let ids: Vec<&str> = set.iter().map(|e| e.utterance_id.as_str()).collect();
    prepare(set, &ids, reconstruct, length_normalize)
}

/// Scores every trial, optionally reconstructing either side and
/// score-normalizing the result. Labels are copied from the trials.
pub fn score_trials(
    backend: &Backend,
    enroll: &EmbeddingSet,
    test: &EmbeddingSet,
    trials: &[Trial],
    opts: &ScoreOptions<'_>,
) -> Result<ScoreSet> {
    let wants_svr = opts.reconstruct_enroll || opts.reconstruct_test || opts.reconstruct_cohort;
    if wants_svr && opts.svr.is_none() {
        return Err(Error::InvalidConfig("reconstruction requested without a network".into()));
    }
    let pick = |flag: bool| if flag { opts.svr } else { None };

    let mut enroll_ids: Vec<&str> = trials.iter().map(|t| t.enroll_utt.as_str()).collect();
    let mut test_ids: Vec<&str> = trials.iter().map(|t| t.test_utt.as_str()).collect();
    for ids in [&mut enroll_ids, &mut test_ids] {
        ids.sort_unstable();
        ids.dedup();
    }
    let enroll_vecs = prepare(enroll, &enroll_ids, pick(opts.reconstruct_enroll), opts.length_normalize)?;
    let test_vecs = prepare(test, &test_ids, pick(opts.reconstruct_test), opts.length_normalize)?;
    if enroll_vecs.dim() != test_vecs.dim() {
        return Err(Error::DimensionMismatch {
            expected: enroll_vecs.dim(),
            found: test_vecs.dim(),
        });
    }

    let lookup_e: HashMap<&str, &[f64]> = enroll_vecs
        .iter()
        .map(|e| (e.utterance_id.as_str(), e.vector.as_slice()))
        .collect();
    let lookup_t: HashMap<&str, &[f64]> = test_vecs
        .iter()
        .map(|e| (e.utterance_id.as_str(), e.vector.as_slice()))
        .collect();

    let entries = trials
        .par_iter()
        .map(|t| {
            let e = lookup_e[t.enroll_utt.as_str()];
            let v = lookup_t[t.test_utt.as_str()];
            Ok(ScoreEntry {
                enroll_utt: t.enroll_utt.clone(),
                test_utt: t.test_utt.clone(),
                score: backend.score(e, v)?,
                label: t.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = ScoreSet::new(entries)?;

    match opts.snorm {
        None => Ok(raw),
        Some(cohort) => {
            let cohort_vecs = transform_all(
                cohort.embeddings(),
                pick(opts.reconstruct_cohort),
                opts.length_normalize,
            )?;
            let cohort = cohort.with_embeddings(cohort_vecs)?;
            snorm(&raw, |a, b| backend.score(a, b), &enroll_vecs, &test_vecs, &cohort)
        }
    }
}
