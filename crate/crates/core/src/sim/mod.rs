//! Seeded synthetic speaker world and degradation channels.
//!
//! Speakers are isotropic Gaussian means; utterances scatter around them.
//! Degradation channels map each clean embedding to a low-quality one. Channel
//! matrices are fixed by the channel seed; per-utterance noise is drawn from a
//! stream keyed by `(channel seed, utterance id)`, so degrading a subset gives
//! the same vectors as degrading the whole set.

mod protocol;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::embedding::{Embedding, EmbeddingSet};
use crate::util::fnv1a;
use crate::{Error, Result};

pub use protocol::{make_protocol, Protocol, SplitConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub dim: usize,
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub sigma_between: f64,
    pub sigma_within: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            dim: 32,
            n_speakers: 400,
            utts_per_speaker: 10,
            sigma_between: 1.0,
            sigma_within: 0.3,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if self.n_speakers < 2 {
            return Err(Error::InvalidConfig("need at least two speakers".into()));
        }
        if self.utts_per_speaker == 0 {
            return Err(Error::InvalidConfig("need at least one utterance per speaker".into()));
        }
        if !(self.sigma_between > 0.0 && self.sigma_between.is_finite()) {
            return Err(Error::InvalidConfig("sigma_between must be positive".into()));
        }
        if !(self.sigma_within >= 0.0 && self.sigma_within.is_finite()) {
            return Err(Error::InvalidConfig("sigma_within must be non-negative".into()));
        }
        Ok(())
    }
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, d: usize, sigma: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

/// Speaker means `m ~ N(0, sigma_between^2 I)`, utterances `m + N(0, sigma_within^2 I)`.
pub fn generate_world(cfg: &WorldConfig) -> Result<EmbeddingSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut items = Vec::with_capacity(cfg.n_speakers * cfg.utts_per_speaker);
    for s in 0..cfg.n_speakers {
        let mean = gaussian_vec(&mut rng, cfg.dim, cfg.sigma_between);
        let speaker = format!("spk{s}");
        for u in 0..cfg.utts_per_speaker {
            let noise = gaussian_vec(&mut rng, cfg.dim, cfg.sigma_within);
            let v = mean.iter().zip(&noise).map(|(m, e)| m + e).collect();
            items.push(Embedding::new(format!("{speaker}/utt{u}"), Some(speaker.clone()), v));
        }
    }
    EmbeddingSet::new(cfg.dim, items)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelKind {
    /// `x + n`, `n ~ N(0, sigma^2 I)` per utterance.
    AdditiveNoise { sigma: f64 },
    /// `Q Q^T x + n` with `Q` a random orthonormal `d x rank` basis.
    RankProjection { rank: usize, sigma: f64 },
    /// `R diag(f) x + b + n` with `R` a random rotation, `f` drawn from
    /// `[1 - scale_spread, 1 + scale_spread]` and `b ~ N(0, bias_spread^2 I)`.
    ///
    /// `R` is the Cayley transform of a random skew-symmetric matrix scaled by
    /// `rotation / sqrt(d)`; 0 gives the identity and large values approach a
    /// fully random rotation.
    ///
    /// With `noise_rank = Some(k)` the per-utterance noise is `sigma * U z`,
    /// `U` a fixed random orthonormal `d x k` basis (a session-nuisance
    /// subspace); `None` gives isotropic noise.
    AffineChannel {
        scale_spread: f64,
        bias_spread: f64,
        sigma: f64,
        rotation: f64,
        noise_rank: Option<usize>,
    },
}

impl ChannelKind {
    /// The default affine channel for dimension `dim`: noise confined to a
    /// subspace of rank `dim / 4`.
    pub fn default_affine(dim: usize) -> Self {
        ChannelKind::AffineChannel {
            scale_spread: 0.5,
            bias_spread: 1.0,
            sigma: 2.0,
            rotation: 0.5,
            noise_rank: Some((dim / 4).max(1)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChannelKind::AdditiveNoise { .. } => "additive_noise",
            ChannelKind::RankProjection { .. } => "rank_projection",
            ChannelKind::AffineChannel { .. } => "affine_channel",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationChannel {
    pub kind: ChannelKind,
    pub seed: u64,
}

impl DegradationChannel {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let nonneg = |v: f64, name: &str| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be non-negative")))
            }
        };
        match self.kind {
            ChannelKind::AdditiveNoise { sigma } => nonneg(sigma, "sigma"),
            ChannelKind::RankProjection { rank, sigma } => {
                if rank == 0 || rank > dim {
                    return Err(Error::InvalidConfig(format!("rank {rank} outside 1..={dim}")));
                }
                nonneg(sigma, "sigma")
            }
            ChannelKind::AffineChannel {
                scale_spread,
                bias_spread,
                sigma,
                rotation,
                noise_rank,
            } => {
                if let Some(k) = noise_rank {
                    if k == 0 || k > dim {
                        return Err(Error::InvalidConfig(format!("noise_rank {k} outside 1..={dim}")));
                    }
                }
                nonneg(scale_spread, "scale_spread")?;
                nonneg(bias_spread, "bias_spread")?;
                nonneg(sigma, "sigma")?;
                nonneg(rotation, "rotation")?;
                if scale_spread >= 1.0 {
                    return Err(Error::InvalidConfig("scale_spread must be < 1".into()));
                }
                Ok(())
            }
        }
    }

    fn noise_sigma(&self) -> f64 {
        match self.kind {
            ChannelKind::AdditiveNoise { sigma }
            | ChannelKind::RankProjection { sigma, .. }
            | ChannelKind::AffineChannel { sigma, .. } => sigma,
        }
    }

    /// The fixed parts of the channel for dimension `dim`.
    pub fn transform(&self, dim: usize) -> Result<ChannelTransform> {
        self.validate(dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(match self.kind {
            ChannelKind::AdditiveNoise { .. } => ChannelTransform::default(),
            ChannelKind::RankProjection { rank, .. } => {
                let q = random_orthonormal(&mut rng, dim, rank);
                ChannelTransform {
                    matrix: Some(&q * q.transpose()),
                    ..Default::default()
                }
            }
            ChannelKind::AffineChannel {
                scale_spread,
                bias_spread,
                rotation,
                noise_rank,
                ..
            } => {
                let r = cayley_rotation(&mut rng, dim, rotation)?;
                let dist = Uniform::new_inclusive(1.0 - scale_spread, 1.0 + scale_spread)
                    .expect("validated spread");
                let factors: Vec<f64> = (0..dim).map(|_| dist.sample(&mut rng)).collect();
                let a = r * DMatrix::from_diagonal(&DVector::from_vec(factors));
                let b = DVector::from_vec(gaussian_vec(&mut rng, dim, bias_spread));
                let noise_basis = noise_rank.map(|k| random_orthonormal(&mut rng, dim, k));
                ChannelTransform {
                    matrix: Some(a),
                    bias: Some(b),
                    noise_basis,
                }
            }
        })
    }
}

/// Fixed (utterance-independent) part of a channel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelTransform {
    pub matrix: Option<DMatrix<f64>>,
    pub bias: Option<DVector<f64>>,
    /// Orthonormal columns spanning the noise subspace; `None` for isotropic noise.
    pub noise_basis: Option<DMatrix<f64>>,
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// `d x r` matrix with orthonormal columns spanning a random subspace.
fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, d: usize, r: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, d, r);
    g.qr().q()
}

fn cayley_rotation<R: Rng + ?Sized>(rng: &mut R, d: usize, strength: f64) -> Result<DMatrix<f64>> {
    let g = gaussian_matrix(rng, d, d);
    let k = (&g - g.transpose()) * (0.5 * strength / (d as f64).sqrt());
    let eye = DMatrix::<f64>::identity(d, d);
    let inv = (&eye - &k)
        .try_inverse()
        .ok_or_else(|| Error::SingularCovariance("Cayley transform is singular".into()))?;
    Ok(inv * (eye + k))
}

/// Applies `channel` to every embedding; ids and order are kept.
pub fn degrade(set: &EmbeddingSet, channel: &DegradationChannel) -> Result<EmbeddingSet> {
    let dim = set.dim();
    let ChannelTransform {
        matrix,
        bias,
        noise_basis,
    } = channel.transform(dim)?;
    let sigma = channel.noise_sigma();
    let mut items = Vec::with_capacity(set.len());
    for e in set {
        let x = DVector::from_column_slice(&e.vector);
        let mut y = match &matrix {
            Some(m) => m * x,
            None => x,
        };
        if let Some(b) = &bias {
            y += b;
        }
        if sigma > 0.0 {
            let stream = channel.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ fnv1a(e.utterance_id.as_bytes());
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            match &noise_basis {
                Some(u) => {
                    let z = DVector::from_vec(gaussian_vec(&mut rng, u.ncols(), sigma));
                    y += u * z;
                }
                None => {
                    for (yi, n) in y.iter_mut().zip(gaussian_vec(&mut rng, dim, sigma)) {
                        *yi += n;
                    }
                }
            }
        }
        items.push(e.with_vector(y.as_slice().to_vec()));
    }
    EmbeddingSet::new(dim, items)
}
