use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::loss::PairSample;
use crate::embedding::EmbeddingSet;
use crate::{Error, Result};

/// Low- and high-quality views of the same utterances, with speaker labels.
#[derive(Debug, Clone)]
pub struct PairedData {
    low: EmbeddingSet,
    high: EmbeddingSet,
    /// For each low item, the index of its high counterpart.
    high_index: Vec<usize>,
    /// Item indices (into `low`) grouped by speaker, in first-appearance order.
    speakers: Vec<Vec<usize>>,
    speaker_of: Vec<usize>,
}

impl PairedData {
    pub fn new(low: EmbeddingSet, high: EmbeddingSet) -> Result<Self> {
        if low.dim() != high.dim() {
            return Err(Error::DimensionMismatch {
                expected: high.dim(),
                found: low.dim(),
            });
        }
        if low.len() != high.len() {
            return Err(Error::InvalidConfig(format!(
                "low-quality set has {} items, high-quality set {}",
                low.len(),
                high.len()
            )));
        }
        let positions: HashMap<&str, usize> = high
            .iter()
            .enumerate()
            .map(|(i, e)| (e.utterance_id.as_str(), i))
            .collect();
        let mut high_index = Vec::with_capacity(low.len());
        let mut speaker_ids: HashMap<&str, usize> = HashMap::new();
        let mut speakers: Vec<Vec<usize>> = Vec::new();
        let mut speaker_of = Vec::with_capacity(low.len());
        for (i, e) in low.iter().enumerate() {
            let h = *positions
                .get(e.utterance_id.as_str())
                .ok_or_else(|| Error::MissingUtterance(e.utterance_id.clone()))?;
            high_index.push(h);
            let spk = e
                .speaker_id
                .as_deref()
                .or(high.items()[h].speaker_id.as_deref())
                .ok_or_else(|| {
                    Error::InsufficientData(format!("utterance {} has no speaker id", e.utterance_id))
                })?;
            let next = speakers.len();
            let s = *speaker_ids.entry(spk).or_insert(next);
            if s == next {
                speakers.push(Vec::new());
            }
            speakers[s].push(i);
            speaker_of.push(s);
        }
        Ok(PairedData {
            low,
            high,
            high_index,
            speakers,
            speaker_of,
        })
    }

    pub fn low(&self) -> &EmbeddingSet {
        &self.low
    }

    pub fn high(&self) -> &EmbeddingSet {
        &self.high
    }

    pub fn dim(&self) -> usize {
        self.low.dim()
    }

    pub fn len(&self) -> usize {
        self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty()
    }

    pub fn num_speakers(&self) -> usize {
        self.speakers.len()
    }

    fn low_vec(&self, i: usize) -> &[f64] {
        &self.low.items()[i].vector
    }

    fn high_vec(&self, i: usize) -> &[f64] {
        &self.high.items()[self.high_index[i]].vector
    }

    fn make_pair(&self, a: usize, b: usize) -> PairSample {
        PairSample {
            x1_low: self.low_vec(a).to_vec(),
            x1_high: self.high_vec(a).to_vec(),
            x2_low: self.low_vec(b).to_vec(),
            x2_high: self.high_vec(b).to_vec(),
            same_speaker: self.speaker_of[a] == self.speaker_of[b],
        }
    }
}

/// Draws `n` training pairs, `round(same_fraction * n)` of them same-speaker.
///
/// Same-speaker pairs pick a first utterance uniformly among utterances whose
/// speaker has at least two, then a distinct second utterance of that speaker.
/// Different-speaker pairs pick both utterances uniformly subject to differing
/// speakers. The result is shuffled so polarities are interleaved.
pub fn sample_pairs<R: Rng + ?Sized>(
    data: &PairedData,
    n: usize,
    same_fraction: f64,
    rng: &mut R,
) -> Result<Vec<PairSample>> {
    if !(0.0..=1.0).contains(&same_fraction) {
        return Err(Error::InvalidConfig(format!(
            "same-speaker fraction {same_fraction} outside [0, 1]"
        )));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData("no training utterances".into()));
    }
    let n_same = (same_fraction * n as f64).round() as usize;
    let n_diff = n - n_same;

    let eligible: Vec<usize> = data
        .speakers
        .iter()
        .filter(|utts| utts.len() >= 2)
        .flatten()
        .copied()
        .collect();
    if n_same > 0 && eligible.is_empty() {
        return Err(Error::InsufficientData(
            "same-speaker pairs need a speaker with at least two utterances".into(),
        ));
    }
    if n_diff > 0 && data.num_speakers() < 2 {
        return Err(Error::InsufficientData(
            "different-speaker pairs need at least two speakers".into(),
        ));
    }

    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n_same {
        let a = eligible[rng.random_range(0..eligible.len())];
        let group = &data.speakers[data.speaker_of[a]];
        let pos_a = group.iter().position(|&u| u == a).expect("a is in its group");
        let mut pos_b = rng.random_range(0..group.len() - 1);
        if pos_b >= pos_a {
            pos_b += 1;
        }
        pairs.push(data.make_pair(a, group[pos_b]));
    }
    let total = data.len();
    for _ in 0..n_diff {
        let a = rng.random_range(0..total);
        let others = total - data.speakers[data.speaker_of[a]].len();
        // Index into the utterances of all other speakers, in item order.
        let mut k = rng.random_range(0..others);
        let b = (0..total)
            .filter(|&u| data.speaker_of[u] != data.speaker_of[a])
            .find(|_| {
                if k == 0 {
                    true
                } else {
                    k -= 1;
                    false
                }
            })
            .expect("k < number of other-speaker utterances");
        pairs.push(data.make_pair(a, b));
    }
    pairs.shuffle(rng);
    Ok(pairs)
}
