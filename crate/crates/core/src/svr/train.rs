use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{batch_loss_and_grad, LossWeights};
use super::mlp::{Activation, MlpGradient, MlpParameters};
use super::pairs::{sample_pairs, PairedData};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(OptimizerKind::Sgd),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub same_speaker_fraction: f64,
    pub seed: u64,
    pub loss_weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dims: vec![512, 512],
            activation: Activation::Relu,
            steps: 2000,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            same_speaker_fraction: 0.5,
            seed: 0,
            loss_weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.hidden_dims.contains(&0) {
            return fail("hidden widths must be positive");
        }
        if self.steps == 0 || self.batch_size == 0 {
            return fail("steps and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.same_speaker_fraction > 0.0 && self.same_speaker_fraction < 1.0) {
            return fail("same_speaker_fraction must lie strictly inside (0, 1)");
        }
        let w = self.loss_weights;
        if !(w.recon > 0.0 && w.cos > 0.0 && w.recon.is_finite() && w.cos.is_finite()) {
            return fail("loss weights must be positive");
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        t: i32,
        m: MlpGradient,
        v: MlpGradient,
    },
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, params: &MlpParameters) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                t: 0,
                m: MlpGradient::zeros_like(params),
                v: MlpGradient::zeros_like(params),
            },
        }
    }

    fn step(&mut self, params: &mut MlpParameters, grad: &MlpGradient) {
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.layers_mut().iter_mut().zip(&grad.layers) {
                    let lr = *lr;
                    p.weights.zip_apply(&g.weights, |p, g| *p -= lr * g);
                    p.bias.zip_apply(&g.bias, |p, g| *p -= lr * g);
                }
            }
            Optimizer::Adam { lr, t, m, v } => {
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t);
                let c2 = 1.0 - ADAM_BETA2.powi(*t);
                let lr = *lr;
                let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                    for i in 0..p.len() {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                };
                for (((p, g), m), v) in params
                    .layers_mut()
                    .iter_mut()
                    .zip(&grad.layers)
                    .zip(&mut m.layers)
                    .zip(&mut v.layers)
                {
                    update(
                        p.weights.as_mut_slice(),
                        g.weights.as_slice(),
                        m.weights.as_mut_slice(),
                        v.weights.as_mut_slice(),
                    );
                    update(
                        p.bias.as_mut_slice(),
                        g.bias.as_slice(),
                        m.bias.as_mut_slice(),
                        v.bias.as_mut_slice(),
                    );
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParameters,
    /// Mean batch loss at each step, evaluated before that step's update.
    pub loss_curve: Vec<f64>,
}

/// Trains the reconstruction network on freshly sampled pair batches.
///
/// A single seeded stream drives initialization and then batch sampling, so
/// the run is a pure function of `(data, cfg)`.
pub fn train(data: &PairedData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = MlpParameters::init(data.dim(), &cfg.hidden_dims, cfg.activation, &mut rng)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &params);
    let mut loss_curve = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let batch = sample_pairs(data, cfg.batch_size, cfg.same_speaker_fraction, &mut rng)?;
        let (loss, grad) = batch_loss_and_grad(&params, &batch, cfg.loss_weights)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::NumericalDivergence { step, loss });
        }
        loss_curve.push(loss);
        opt.step(&mut params, &grad);
        if !params.is_finite() {
            return Err(Error::NumericalDivergence { step, loss });
        }
    }
    Ok(TrainOutcome { params, loss_curve })
}

/// `step,loss` lines under a header.
pub fn write_loss_curve<W: std::io::Write>(curve: &[f64], mut sink: W) -> Result<()> {
    writeln!(sink, "step,loss")?;
    for (i, l) in curve.iter().enumerate() {
        writeln!(sink, "{i},{}", crate::util::fmt17(*l))?;
    }
    sink.flush()?;
    Ok(())
}
