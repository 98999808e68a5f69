//! Joint reconstruction + cosine objective over a pair of weight-shared branches.
//!
//! For a pair `(x1_low, x1_high), (x2_low, x2_high)` with outputs `y1 = F(x1_low)`,
//! `y2 = F(x2_low)`:
//!
//! ```text
//! L = w_recon * (|y1 - x1_high|^2 + |y2 - x2_high|^2) + w_cos * (cos(y1, y2) - delta)^2
//! ```
//!
//! where `delta` is 1 for a same-speaker pair and 0 otherwise.

use nalgebra::DMatrix;

use super::mlp::{MlpGradient, MlpParameters};
use crate::embedding::{cosine_similarity, dot};
use crate::{Error, Result};

/// Reconstructed outputs with a norm below this make the cosine undefined.
pub const MIN_OUTPUT_NORM: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub x1_low: Vec<f64>,
    pub x1_high: Vec<f64>,
    pub x2_low: Vec<f64>,
    pub x2_high: Vec<f64>,
    pub same_speaker: bool,
}

impl PairSample {
    pub fn target(&self) -> f64 {
        if self.same_speaker {
            1.0
        } else {
            0.0
        }
    }

    /// The same pair with the two branches exchanged.
    pub fn swapped(&self) -> PairSample {
        PairSample {
            x1_low: self.x2_low.clone(),
            x1_high: self.x2_high.clone(),
            x2_low: self.x1_low.clone(),
            x2_high: self.x1_high.clone(),
            same_speaker: self.same_speaker,
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        for v in [&self.x1_low, &self.x1_high, &self.x2_low, &self.x2_high] {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub recon: f64,
    pub cos: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            recon: 1.0,
            cos: 1.0,
        }
    }
}

/// Weighted total and the unweighted terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoss {
    pub total: f64,
    pub recon1: f64,
    pub recon2: f64,
    pub cos_term: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn checked_norm(v: &[f64]) -> Result<f64> {
    let n = dot(v, v).sqrt();
    if n < MIN_OUTPUT_NORM {
        Err(Error::ZeroVector)
    } else {
        Ok(n)
    }
}

fn loss_from_outputs(y1: &[f64], y2: &[f64], s: &PairSample, w: LossWeights) -> Result<PairLoss> {
    checked_norm(y1)?;
    checked_norm(y2)?;
    let recon1 = sq_dist(y1, &s.x1_high);
    let recon2 = sq_dist(y2, &s.x2_high);
    let residual = cosine_similarity(y1, y2)? - s.target();
    let cos_term = residual * residual;
    Ok(PairLoss {
        total: w.recon * (recon1 + recon2) + w.cos * cos_term,
        recon1,
        recon2,
        cos_term,
    })
}

pub fn svr_pair_loss(params: &MlpParameters, s: &PairSample, weights: LossWeights) -> Result<PairLoss> {
    s.check_dim(params.dim())?;
    let y1 = params.forward(&s.x1_low)?;
    let y2 = params.forward(&s.x2_low)?;
    loss_from_outputs(&y1, &y2, s, weights)
}

/// Gradient of [`svr_pair_loss`] w.r.t. every parameter; both branches
/// accumulate into the one shared parameter set.
pub fn svr_pair_grad(
    params: &MlpParameters,
    s: &PairSample,
    weights: LossWeights,
) -> Result<MlpGradient> {
    batch_loss_and_grad(params, std::slice::from_ref(s), weights).map(|(_, g)| g)
}

/// Mean loss over `batch` and the gradient of that mean.
pub fn batch_loss_and_grad(
    params: &MlpParameters,
    batch: &[PairSample],
    weights: LossWeights,
) -> Result<(f64, MlpGradient)> {
    let d = params.dim();
    let n = batch.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    for s in batch {
        s.check_dim(d)?;
    }

    // Columns 0..n hold branch 1, n..2n branch 2; one pass serves both branches.
    let inputs = DMatrix::from_fn(d, 2 * n, |r, c| {
        if c < n {
            batch[c].x1_low[r]
        } else {
            batch[c - n].x2_low[r]
        }
    });
    let cache = params.forward_batch(inputs);
    let out = cache.output();

    let scale = 1.0 / n as f64;
    let mut d_out = DMatrix::zeros(d, 2 * n);
    let mut total = 0.0;
    for (j, s) in batch.iter().enumerate() {
        let y1 = out.column(j);
        let y2 = out.column(n + j);
        let (y1, y2) = (y1.as_slice(), y2.as_slice());
        let loss = loss_from_outputs(y1, y2, s, weights)?;
        total += loss.total;

        let n1 = checked_norm(y1)?;
        let n2 = checked_norm(y2)?;
        let raw_cos = dot(y1, y2) / (n1 * n2);
        let residual = raw_cos.clamp(-1.0, 1.0) - s.target();
        let k = 2.0 * weights.cos * residual;
        let inv12 = 1.0 / (n1 * n2);
        let c1 = raw_cos / (n1 * n1);
        let c2 = raw_cos / (n2 * n2);
        for r in 0..d {
            let g1 = 2.0 * weights.recon * (y1[r] - s.x1_high[r]) + k * (y2[r] * inv12 - c1 * y1[r]);
            let g2 = 2.0 * weights.recon * (y2[r] - s.x2_high[r]) + k * (y1[r] * inv12 - c2 * y2[r]);
            d_out[(r, j)] = g1 * scale;
            d_out[(r, n + j)] = g2 * scale;
        }
    }
    let grad = params.backward_batch(&cache, d_out);
    Ok((total * scale, grad))
}
