//! Line-oriented text formats.
//!
//! EVEC:
//! ```text
//! # evec v1 dim=<d>
//! <utterance_id> <speaker_id|-> <v1> ... <vd>
//! ```
//! TRIALS: `<enroll> <test>[ <target|nontarget>]`
//!
//! SCORES: `<enroll> <test> <score>[ <target|nontarget>]`, score with 17
//! significant digits. The label column is only written for labeled entries.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use super::{Embedding, EmbeddingSet, Label, ScoreEntry, ScoreSet, Trial, UNKNOWN_SPEAKER};
use crate::util::{fmt17, fmt_exact};
use crate::{Error, Result};

fn parse_finite(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::format(line, format!("not a number: {token:?}")))?;
    if !v.is_finite() {
        return Err(Error::format(line, format!("non-finite value: {token:?}")));
    }
    Ok(v)
}

fn parse_header(header: &str) -> Result<usize> {
    let tokens: Vec<&str> = header.split_whitespace().collect();
    match tokens.as_slice() {
        ["#", "evec", "v1", dim] => dim
            .strip_prefix("dim=")
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|&d| d >= 1)
            .ok_or_else(|| Error::format(1, format!("bad dimension field {dim:?}"))),
        _ => Err(Error::format(1, format!("bad header {header:?}"))),
    }
}

pub fn load_embeddings<R: BufRead>(source: R) -> Result<EmbeddingSet> {
    let mut lines = source.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(1, "empty input, missing header"))??;
    let dim = parse_header(&header)?;

    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 2 {
            return Err(Error::format(
                lineno,
                format!("expected {} fields, found {}", dim + 2, fields.len()),
            ));
        }
        let utt = fields[0];
        if !seen.insert(utt.to_string()) {
            return Err(Error::format(lineno, format!("duplicate utterance id {utt}")));
        }
        let speaker = (fields[1] != UNKNOWN_SPEAKER).then(|| fields[1].to_string());
        let vector = fields[2..]
            .iter()
            .map(|t| parse_finite(t, lineno))
            .collect::<Result<Vec<_>>>()?;
        items.push(Embedding::new(utt, speaker, vector));
    }
    EmbeddingSet::new(dim, items)
}

pub fn save_embeddings<W: Write>(set: &EmbeddingSet, mut sink: W) -> Result<()> {
    writeln!(sink, "# evec v1 dim={}", set.dim())?;
    for e in set {
        let speaker = e.speaker_id.as_deref().unwrap_or(UNKNOWN_SPEAKER);
        write!(sink, "{} {}", e.utterance_id, speaker)?;
        for &v in &e.vector {
            write!(sink, " {}", fmt_exact(v))?;
        }
        writeln!(sink)?;
    }
    sink.flush()?;
    Ok(())
}

fn parse_label(token: &str, line: usize) -> Result<Label> {
    Label::parse(token).ok_or_else(|| Error::format(line, format!("unknown label {token:?}")))
}

pub fn load_trials<R: BufRead>(source: R) -> Result<Vec<Trial>> {
    let mut trials = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [e, t] => trials.push(Trial::new(*e, *t, None)),
            [e, t, label] => trials.push(Trial::new(*e, *t, Some(parse_label(label, lineno)?))),
            _ => {
                return Err(Error::format(
                    lineno,
                    format!("expected 2 or 3 fields, found {}", fields.len()),
                ))
            }
        }
    }
    Ok(trials)
}

pub fn save_trials<W: Write>(trials: &[Trial], mut sink: W) -> Result<()> {
    for t in trials {
        match t.label {
            Some(l) => writeln!(sink, "{} {} {}", t.enroll_utt, t.test_utt, l.as_str())?,
            None => writeln!(sink, "{} {}", t.enroll_utt, t.test_utt)?,
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn load_scores<R: BufRead>(source: R) -> Result<ScoreSet> {
    let mut entries = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (e, t, s, label) = match fields.as_slice() {
            [] => continue,
            [e, t, s] => (*e, *t, *s, None),
            [e, t, s, l] => (*e, *t, *s, Some(parse_label(l, lineno)?)),
            _ => {
                return Err(Error::format(
                    lineno,
                    format!("expected 3 or 4 fields, found {}", fields.len()),
                ))
            }
        };
        entries.push(ScoreEntry {
            enroll_utt: e.to_string(),
            test_utt: t.to_string(),
            score: parse_finite(s, lineno)?,
            label,
        });
    }
    ScoreSet::new(entries).map_err(|e| Error::format(0, e.to_string()))
}

pub fn save_scores<W: Write>(scores: &ScoreSet, mut sink: W) -> Result<()> {
    for e in scores.entries() {
        write!(sink, "{} {} {}", e.enroll_utt, e.test_utt, fmt17(e.score))?;
        if let Some(l) = e.label {
            write!(sink, " {}", l.as_str())?;
        }
        writeln!(sink)?;
    }
    sink.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loads_minimal_file() {
        let set = load_embeddings("# evec v1 dim=2\nu1 s1 1.0 2.0\n".as_bytes()).unwrap();
        assert_eq!(set.dim(), 2);
        assert_eq!(set.len(), 1);
        assert_eq!(set.items()[0].speaker_id.as_deref(), Some("s1"));
        assert_eq!(set.items()[0].vector, vec![1.0, 2.0]);
    }

    #[test]
    fn dash_speaker_is_unknown() {
        let set = load_embeddings("# evec v1 dim=1\nu1 - 1e-3\n".as_bytes()).unwrap();
        assert_eq!(set.items()[0].speaker_id, None);
        assert_eq!(set.items()[0].vector, vec![1e-3]);
    }

    #[test]
    fn rejects_malformed_embeddings() {
        for bad in [
            "# evec v1 dim=2\nu1 s1 1.0 2.0 3.0\n",
            "# evec v2 dim=2\n",
            "# evec v1 dim=0\n",
            "dim=2\nu1 s1 1 2\n",
            "# evec v1 dim=2\nu1 s1 1.0 abc\n",
            "# evec v1 dim=2\nu1 s1 1.0 NaN\n",
            "# evec v1 dim=1\nu1 s1 1.0\nu1 s1 2.0\n",
            "",
        ] {
            assert!(
                matches!(load_embeddings(bad.as_bytes()), Err(Error::Format { .. })),
                "accepted {bad:?}"
            );
        }
    }

    #[test]
    fn trial_lines() {
        let trials = load_trials("e1 t1 target\ne1 t2\n\ne2 t1 nontarget\n".as_bytes()).unwrap();
        assert_eq!(trials[0], Trial::new("e1", "t1", Some(Label::Target)));
        assert_eq!(trials[1], Trial::new("e1", "t2", None));
        assert_eq!(trials[2].label, Some(Label::Nontarget));
        assert!(matches!(
            load_trials("e1 t1 maybe\n".as_bytes()),
            Err(Error::Format { line: 1, .. })
        ));
    }

    #[test]
    fn score_lines_use_17_digits() {
        let set = ScoreSet::new(vec![ScoreEntry {
            enroll_utt: "e".into(),
            test_utt: "t".into(),
            score: 0.1,
            label: None,
        }])
        .unwrap();
        let mut buf = Vec::new();
        save_scores(&set, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "e t 1.0000000000000001e-1\n");
        assert_eq!(load_scores(buf.as_slice()).unwrap(), set);
    }

    fn arb_set() -> impl Strategy<Value = EmbeddingSet> {
        (1usize..6, 0usize..8).prop_flat_map(|(dim, n)| {
            proptest::collection::vec(
                (
                    proptest::option::of("[a-z]{1,4}"),
                    proptest::collection::vec(
                        prop_oneof![
                            any::<f64>().prop_filter("finite", |v| v.is_finite()),
                            -1e3f64..1e3,
                        ],
                        dim,
                    ),
                ),
                n,
            )
            .prop_map(move |rows| {
                let items = rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (spk, v))| Embedding::new(format!("utt{i}"), spk, v))
                    .collect();
                EmbeddingSet::new(dim, items).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn evec_round_trip_is_bit_exact(set in arb_set()) {
            let mut buf = Vec::new();
            save_embeddings(&set, &mut buf).unwrap();
            let back = load_embeddings(buf.as_slice()).unwrap();
            prop_assert_eq!(back.dim(), set.dim());
            for (a, b) in back.iter().zip(set.iter()) {
                prop_assert_eq!(&a.utterance_id, &b.utterance_id);
                prop_assert_eq!(&a.speaker_id, &b.speaker_id);
                let ab: Vec<u64> = a.vector.iter().map(|v| v.to_bits()).collect();
                let bb: Vec<u64> = b.vector.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(ab, bb);
            }
        }
    }
}
