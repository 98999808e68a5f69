use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::{EmbeddingSet, Label, Trial};
use crate::svr::PairedData;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub train_speaker_fraction: f64,
    pub n_enroll_utts_per_speaker: usize,
    pub n_trials_target: usize,
    pub n_trials_nontarget: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_speaker_fraction: 0.75,
            n_enroll_utts_per_speaker: 3,
            n_trials_target: 2000,
            n_trials_nontarget: 20000,
            seed: 0,
        }
    }
}

/// A speaker-disjoint experiment: paired training data for the reconstruction
/// network and an evaluation split with both quality views of every utterance.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub train: PairedData,
    pub enroll_high: EmbeddingSet,
    pub enroll_low: EmbeddingSet,
    pub test_high: EmbeddingSet,
    pub test_low: EmbeddingSet,
    pub trials: Vec<Trial>,
    pub train_speakers: Vec<String>,
    pub eval_speakers: Vec<String>,
}

/// Splits a clean world and its degraded counterpart into training and
/// evaluation parts and samples labeled trials without replacement.
pub fn make_protocol(high: &EmbeddingSet, low: &EmbeddingSet, split: &SplitConfig) -> Result<Protocol> {
    if !(split.train_speaker_fraction > 0.0 && split.train_speaker_fraction < 1.0) {
        return Err(Error::InvalidConfig("train_speaker_fraction must lie in (0, 1)".into()));
    }
    if split.n_enroll_utts_per_speaker == 0 {
        return Err(Error::InvalidConfig("need at least one enrollment utterance".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);

    let mut order: Vec<String> = Vec::new();
    let mut utts: HashMap<String, Vec<String>> = HashMap::new();
    for e in high {
        let spk = e.speaker_id.clone().ok_or_else(|| {
            Error::InsufficientData(format!("utterance {} has no speaker id", e.utterance_id))
        })?;
        utts.entry(spk.clone())
            .or_insert_with(|| {
                order.push(spk.clone());
                Vec::new()
            })
            .push(e.utterance_id.clone());
    }
    order.shuffle(&mut rng);
    let n_train = (split.train_speaker_fraction * order.len() as f64).round() as usize;
    if n_train < 2 || order.len() - n_train < 2 {
        return Err(Error::InsufficientData(format!(
            "{} speakers cannot form a train split of {n_train} and an eval split of at least 2",
            order.len()
        )));
    }
    let eval_speakers = order.split_off(n_train);
    let train_speakers = order;

    let mut enroll_ids: Vec<(String, usize)> = Vec::new();
    let mut test_ids: Vec<(String, usize)> = Vec::new();
    for (s, spk) in eval_speakers.iter().enumerate() {
        let mut list = utts[spk].clone();
        if list.len() <= split.n_enroll_utts_per_speaker {
            return Err(Error::InsufficientData(format!(
                "speaker {spk} has {} utterances, needs more than {}",
                list.len(),
                split.n_enroll_utts_per_speaker
            )));
        }
        list.shuffle(&mut rng);
        let test = list.split_off(split.n_enroll_utts_per_speaker);
        enroll_ids.extend(list.into_iter().map(|u| (u, s)));
        test_ids.extend(test.into_iter().map(|u| (u, s)));
    }

    let n_pairs = enroll_ids.len() * test_ids.len();
    let same: usize = {
        let mut per_spk = vec![(0usize, 0usize); eval_speakers.len()];
        enroll_ids.iter().for_each(|(_, s)| per_spk[*s].0 += 1);
        test_ids.iter().for_each(|(_, s)| per_spk[*s].1 += 1);
        per_spk.iter().map(|(e, t)| e * t).sum()
    };
    if split.n_trials_target > same || split.n_trials_nontarget > n_pairs - same {
        return Err(Error::InsufficientData(format!(
            "requested {} target / {} nontarget trials, only {same} / {} available",
            split.n_trials_target,
            split.n_trials_nontarget,
            n_pairs - same
        )));
    }
    let mut target_pairs = Vec::with_capacity(same);
    let mut nontarget_pairs = Vec::with_capacity(n_pairs - same);
    for (ei, (_, es)) in enroll_ids.iter().enumerate() {
        for (ti, (_, ts)) in test_ids.iter().enumerate() {
            if es == ts {
                target_pairs.push((ei, ti));
            } else {
                nontarget_pairs.push((ei, ti));
            }
        }
    }
    let mut trials = Vec::with_capacity(split.n_trials_target + split.n_trials_nontarget);
    for (pairs, n, label) in [
        (&target_pairs, split.n_trials_target, Label::Target),
        (&nontarget_pairs, split.n_trials_nontarget, Label::Nontarget),
    ] {
        let mut picked = index::sample(&mut rng, pairs.len(), n).into_vec();
        picked.sort_unstable();
        trials.extend(picked.into_iter().map(|i| {
            let (ei, ti) = pairs[i];
            Trial::new(enroll_ids[ei].0.clone(), test_ids[ti].0.clone(), Some(label))
        }));
    }

    let is_train: std::collections::HashSet<&str> = train_speakers.iter().map(String::as_str).collect();
    let in_train = |e: &crate::embedding::Embedding| {
        e.speaker_id.as_deref().is_some_and(|s| is_train.contains(s))
    };
    let enroll_set: std::collections::HashSet<&str> = enroll_ids.iter().map(|(u, _)| u.as_str()).collect();
    let test_set: std::collections::HashSet<&str> = test_ids.iter().map(|(u, _)| u.as_str()).collect();

    let speaker_low = |set: &EmbeddingSet| -> Result<EmbeddingSet> {
        // Low-quality files may omit speaker ids; carry them over from the clean view.
        let items = set
            .iter()
            .map(|e| {
                let clean = high
                    .get(&e.utterance_id)
                    .ok_or_else(|| Error::MissingUtterance(e.utterance_id.clone()))?;
                let mut e = e.clone();
                e.speaker_id = clean.speaker_id.clone();
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        EmbeddingSet::new(set.dim(), items)
    };
    let low = speaker_low(low)?;

    let train = PairedData::new(low.filter(in_train), high.filter(in_train))?;
    Ok(Protocol {
        train,
        enroll_high: high.filter(|e| enroll_set.contains(e.utterance_id.as_str())),
        enroll_low: low.filter(|e| enroll_set.contains(e.utterance_id.as_str())),
        test_high: high.filter(|e| test_set.contains(e.utterance_id.as_str())),
        test_low: low.filter(|e| test_set.contains(e.utterance_id.as_str())),
        trials,
        train_speakers,
        eval_speakers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{degrade, generate_world, ChannelKind, DegradationChannel, WorldConfig};
    use std::collections::HashSet;

    fn protocol(seed: u64) -> Protocol {
        let world = generate_world(&WorldConfig {
            dim: 4,
            n_speakers: 12,
            utts_per_speaker: 5,
            ..Default::default()
        })
        .unwrap();
        let low = degrade(
            &world,
            &DegradationChannel {
                kind: ChannelKind::AdditiveNoise { sigma: 0.5 },
                seed: 1,
            },
        )
        .unwrap();
        make_protocol(
            &world,
            &low,
            &SplitConfig {
                train_speaker_fraction: 0.5,
                n_enroll_utts_per_speaker: 2,
                n_trials_target: 30,
                n_trials_nontarget: 100,
                seed,
            },
        )
        .unwrap()
    }

    #[test]
    fn speaker_disjoint_split() {
        let p = protocol(0);
        let train: HashSet<_> = p.train_speakers.iter().collect();
        assert!(p.eval_speakers.iter().all(|s| !train.contains(s)));
        assert_eq!(p.train_speakers.len(), 6);
        assert_eq!(p.train.len(), 30);
        for e in p.enroll_high.iter().chain(p.test_high.iter()) {
            assert!(!train.contains(e.speaker_id.as_ref().unwrap()));
        }
        assert_eq!(p.enroll_high.len(), 12);
        assert_eq!(p.test_high.len(), 18);
    }

    #[test]
    fn trials_reference_existing_utterances_with_correct_labels() {
        let p = protocol(0);
        assert_eq!(p.trials.len(), 130);
        let uniq: HashSet<_> = p.trials.iter().map(|t| (&t.enroll_utt, &t.test_utt)).collect();
        assert_eq!(uniq.len(), 130);
        for t in &p.trials {
            let e = p.enroll_high.get(&t.enroll_utt).unwrap();
            let v = p.test_high.get(&t.test_utt).unwrap();
            assert!(p.enroll_low.get(&t.enroll_utt).is_some());
            assert!(p.test_low.get(&t.test_utt).is_some());
            let same = e.speaker_id == v.speaker_id;
            assert_eq!(t.label == Some(Label::Target), same);
        }
        assert_eq!(p.trials.iter().filter(|t| t.label == Some(Label::Target)).count(), 30);
    }

    #[test]
    fn deterministic() {
        let (a, b) = (protocol(3), protocol(3));
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.enroll_low, b.enroll_low);
        assert_ne!(a.trials, protocol(4).trials);
    }

    #[test]
    fn too_many_trials_requested() {
        let world = generate_world(&WorldConfig {
            dim: 2,
            n_speakers: 6,
            utts_per_speaker: 3,
            ..Default::default()
        })
        .unwrap();
        let split = SplitConfig {
            train_speaker_fraction: 0.5,
            n_enroll_utts_per_speaker: 1,
            n_trials_target: 1000,
            n_trials_nontarget: 1,
            seed: 0,
        };
        assert!(matches!(
            make_protocol(&world, &world, &split),
            Err(Error::InsufficientData(_))
        ));
    }
}
