//! Detection metrics: operating-point sweep, EER and minimum detection cost.
//!
//! A trial is accepted iff `score >= threshold`. Candidate thresholds are one
//! below the lowest score, the midpoints between consecutive distinct scores,
//! and one above the highest score, so every distinct decision split of the
//! sorted scores is visited exactly once.

use std::io::Write;

use crate::embedding::{Label, ScoreSet};
use crate::util::fmt17;
use crate::{Error, Result};

/// Cost weights averaged by [`evaluate`].
pub const DEFAULT_BETAS: [f64; 2] = [99.0, 199.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_fn: f64,
    pub p_fp: f64,
}

impl OperatingPoint {
    pub fn dcf(&self, beta: f64) -> f64 {
        self.p_fn + beta * self.p_fp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub eer: f64,
    pub min_dcf_avg: f64,
    pub min_dcf_per_beta: Vec<(f64, f64)>,
    pub n_target: usize,
    pub n_nontarget: usize,
    pub det_points: Vec<OperatingPoint>,
}

/// Splits a labeled score set into (target, nontarget) scores.
pub fn split_by_label(scores: &ScoreSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let unlabeled = scores.entries().iter().filter(|e| e.label.is_none()).count();
    if unlabeled > 0 {
        return Err(Error::MissingLabels(unlabeled));
    }
    let mut tar = Vec::new();
    let mut non = Vec::new();
    for e in scores.entries() {
        match e.label {
            Some(Label::Target) => tar.push(e.score),
            _ => non.push(e.score),
        }
    }
    if tar.is_empty() {
        return Err(Error::EmptyClass("target"));
    }
    if non.is_empty() {
        return Err(Error::EmptyClass("nontarget"));
    }
    Ok((tar, non))
}

fn below(x: f64) -> f64 {
    if x - 1.0 < x {
        x - 1.0
    } else {
        f64::NEG_INFINITY
    }
}

fn above(x: f64) -> f64 {
    if x + 1.0 > x {
        x + 1.0
    } else {
        f64::INFINITY
    }
}

/// Sweep from raw class scores; thresholds increase along the result.
pub fn sweep(targets: &[f64], nontargets: &[f64]) -> Vec<OperatingPoint> {
    let mut all: Vec<(f64, bool)> = targets
        .iter()
        .map(|&s| (s, true))
        .chain(nontargets.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n_tar = targets.len() as f64;
    let n_non = nontargets.len() as f64;
    let mut points = Vec::with_capacity(all.len() + 1);
    // Below everything: all accepted.
    let mut tar_rejected = 0usize;
    let mut non_accepted = nontargets.len();
    points.push(OperatingPoint {
        threshold: all.first().map_or(0.0, |a| below(a.0)),
        p_fn: 0.0,
        p_fp: non_accepted as f64 / n_non,
    });

    let mut i = 0;
    while i < all.len() {
        let value = all[i].0;
        // Move the whole tie group below the threshold.
        while i < all.len() && all[i].0 == value {
            if all[i].1 {
                tar_rejected += 1;
            } else {
                non_accepted -= 1;
            }
            i += 1;
        }
        let threshold = match all.get(i) {
            Some(next) => value + (next.0 - value) / 2.0,
            None => above(value),
        };
        points.push(OperatingPoint {
            threshold,
            p_fn: tar_rejected as f64 / n_tar,
            p_fp: non_accepted as f64 / n_non,
        });
    }
    points
}

pub fn operating_points(scores: &ScoreSet) -> Result<Vec<OperatingPoint>> {
    let (tar, non) = split_by_label(scores)?;
    Ok(sweep(&tar, &non))
}

/// Equal error rate along a sweep. Exact when some point has `p_fn == p_fp`,
/// otherwise linearly interpolated across the sign change of `p_fn - p_fp`.
pub fn eer_from_points(points: &[OperatingPoint]) -> f64 {
    if let Some(p) = points.iter().find(|p| p.p_fn == p.p_fp) {
        return p.p_fn;
    }
    for w in points.windows(2) {
        let d0 = w[0].p_fn - w[0].p_fp;
        let d1 = w[1].p_fn - w[1].p_fp;
        if d0 < 0.0 && d1 > 0.0 {
            let t = d0 / (d0 - d1);
            return w[0].p_fn + t * (w[1].p_fn - w[0].p_fn);
        }
    }
    // A sweep always starts at (0, 1) and ends at (1, 0).
    unreachable!("operating points do not span the full sweep")
}

pub fn min_dcf_from_points(points: &[OperatingPoint], beta: f64) -> f64 {
    points
        .iter()
        .map(|p| p.dcf(beta))
        .fold(f64::INFINITY, f64::min)
}

pub fn eer(scores: &ScoreSet) -> Result<f64> {
    Ok(eer_from_points(&operating_points(scores)?))
}

/// Minimum DCF per beta and its arithmetic mean over `betas`.
pub fn min_dcf(scores: &ScoreSet, betas: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidConfig("betas must be positive and non-empty".into()));
    }
    let points = operating_points(scores)?;
    Ok(min_dcf_over(&points, betas))
}

fn min_dcf_over(points: &[OperatingPoint], betas: &[f64]) -> (f64, Vec<(f64, f64)>) {
    let per: Vec<(f64, f64)> = betas
        .iter()
        .map(|&b| (b, min_dcf_from_points(points, b)))
        .collect();
    let avg = per.iter().map(|(_, v)| v).sum::<f64>() / per.len() as f64;
    (avg, per)
}

pub fn evaluate(scores: &ScoreSet) -> Result<MetricsReport> {
    let (tar, non) = split_by_label(scores)?;
    let det_points = sweep(&tar, &non);
    let eer = eer_from_points(&det_points);
    let (min_dcf_avg, min_dcf_per_beta) = min_dcf_over(&det_points, &DEFAULT_BETAS);
    Ok(MetricsReport {
        eer,
        min_dcf_avg,
        min_dcf_per_beta,
        n_target: tar.len(),
        n_nontarget: non.len(),
        det_points,
    })
}

fn beta_key(beta: f64) -> String {
    if beta.fract() == 0.0 {
        format!("{}", beta as i64)
    } else {
        format!("{beta}")
    }
}

/// `key=value` report lines.
pub fn write_report<W: Write>(report: &MetricsReport, mut sink: W) -> Result<()> {
    writeln!(sink, "eer={}", fmt17(report.eer))?;
    writeln!(sink, "min_dcf_avg={}", fmt17(report.min_dcf_avg))?;
    for (beta, v) in &report.min_dcf_per_beta {
        writeln!(sink, "min_dcf_beta_{}={}", beta_key(*beta), fmt17(*v))?;
    }
    writeln!(sink, "n_target={}", report.n_target)?;
    writeln!(sink, "n_nontarget={}", report.n_nontarget)?;
    sink.flush()?;
    Ok(())
}

pub fn write_det_csv<W: Write>(points: &[OperatingPoint], mut sink: W) -> Result<()> {
    writeln!(sink, "threshold,p_fn,p_fp")?;
    for p in points {
        writeln!(sink, "{},{},{}", fmt17(p.threshold), fmt17(p.p_fn), fmt17(p.p_fp))?;
    }
    sink.flush()?;
    Ok(())
}
