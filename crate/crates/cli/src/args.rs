use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use svr_core::sim::{ChannelKind, DegradationChannel, SplitConfig, WorldConfig};
use svr_core::svr::{Activation, LossWeights, OptimizerKind, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "svrbench", version, about = "Embedding-space reconstruction experiments for speaker verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world, degrade it and split it into train/enroll/test.
    Simulate(SimulateArgs),
    /// Train the reconstruction network on paired low/high embeddings.
    Train(TrainArgs),
    /// Pass embeddings through a trained network.
    Reconstruct(ReconstructArgs),
    /// Score a trial list.
    Score(ScoreArgs),
    /// Compute EER and minDCF for a labeled score file.
    Evaluate(EvaluateArgs),
    /// Evaluate PLDA adaptation over a grid of interpolation weights.
    SweepAlpha(SweepArgs),
    /// Run the method x enrollment-mode matrix end to end.
    FullExp(FullExpArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Optional `key=value` file; keys are long flag names. Flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelName {
    #[value(name = "additive_noise")]
    AdditiveNoise,
    #[value(name = "rank_projection")]
    RankProjection,
    #[value(name = "affine_channel")]
    AffineChannel,
}

#[derive(Debug, Args)]
pub struct WorldArgs {
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 400)]
    pub n_speakers: usize,
    #[arg(long, default_value_t = 10)]
    pub utts_per_speaker: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_between: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma_within: f64,
}

impl WorldArgs {
    pub fn config(&self, seed: u64) -> WorldConfig {
        WorldConfig {
            dim: self.dim,
            n_speakers: self.n_speakers,
            utts_per_speaker: self.utts_per_speaker,
            sigma_between: self.sigma_between,
            sigma_within: self.sigma_within,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct ChannelArgs {
    #[arg(long, value_enum, default_value = "affine_channel")]
    pub channel: ChannelName,
    /// Per-utterance noise level [default: 0.5 additive, 0.1 rank, 2.0 affine].
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Projection rank for rank_projection [default: dim/2].
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub scale_spread: f64,
    #[arg(long, default_value_t = 1.0)]
    pub bias_spread: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rotation: f64,
    /// Rank of the affine channel's noise subspace; 0 means isotropic [default: dim/4].
    #[arg(long)]
    pub noise_rank: Option<usize>,
}

impl ChannelArgs {
    pub fn channel(&self, dim: usize, seed: u64) -> DegradationChannel {
        let kind = match self.channel {
            ChannelName::AdditiveNoise => ChannelKind::AdditiveNoise {
                sigma: self.noise_sigma.unwrap_or(0.5),
            },
            ChannelName::RankProjection => ChannelKind::RankProjection {
                rank: self.rank.unwrap_or((dim / 2).max(1)),
                sigma: self.noise_sigma.unwrap_or(0.1),
            },
            ChannelName::AffineChannel => {
                let ChannelKind::AffineChannel { sigma, noise_rank, .. } = ChannelKind::default_affine(dim) else {
                    unreachable!()
                };
                ChannelKind::AffineChannel {
                    scale_spread: self.scale_spread,
                    bias_spread: self.bias_spread,
                    sigma: self.noise_sigma.unwrap_or(sigma),
                    rotation: self.rotation,
                    noise_rank: match self.noise_rank {
                        Some(0) => None,
                        Some(k) => Some(k),
                        None => noise_rank,
                    },
                }
            }
        };
        DegradationChannel { kind, seed }
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 3)]
    pub enroll_utts: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_target: usize,
    #[arg(long, default_value_t = 20000)]
    pub n_nontarget: usize,
}

impl SplitArgs {
    pub fn config(&self, seed: u64) -> SplitConfig {
        SplitConfig {
            train_speaker_fraction: self.train_fraction,
            n_enroll_utts_per_speaker: self.enroll_utts,
            n_trials_target: self.n_target,
            n_trials_nontarget: self.n_nontarget,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "512,512")]
    pub hidden: Vec<usize>,
    /// relu or tanh.
    #[arg(long, default_value = "relu")]
    pub activation: String,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// adam or sgd.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    /// Fraction of same-speaker pairs per batch.
    #[arg(long, default_value_t = 0.5)]
    pub same_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_recon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_cos: f64,
}

impl TrainingArgs {
    pub fn config(&self, seed: u64) -> CliResult<TrainConfig> {
        let activation = Activation::parse(&self.activation)
            .ok_or_else(|| CliError::Usage(format!("unknown activation '{}'", self.activation)))?;
        let optimizer = OptimizerKind::parse(&self.optimizer)
            .ok_or_else(|| CliError::Usage(format!("unknown optimizer '{}'", self.optimizer)))?;
        let cfg = TrainConfig {
            hidden_dims: self.hidden.clone(),
            activation,
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            optimizer,
            same_speaker_fraction: self.same_fraction,
            seed,
            loss_weights: LossWeights {
                recon: self.w_recon,
                cos: self.w_cos,
            },
        };
        cfg.validate().map_err(|e| CliError::core("training config", e))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub world: WorldArgs,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Degraded training embeddings (network input).
    #[arg(long)]
    pub train_low: PathBuf,
    /// Clean training embeddings (reconstruction target), same ids.
    #[arg(long)]
    pub train_high: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// [default: <out-dir>/reconstructed.evec]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendName {
    Cosine,
    Plda,
}

#[derive(Debug, Args)]
pub struct PldaArgs {
    /// Trained PLDA model file.
    #[arg(long, conflicts_with = "plda_train")]
    pub plda: Option<PathBuf>,
    /// Labeled embeddings to fit PLDA on (written to <out-dir>/plda.model).
    #[arg(long)]
    pub plda_train: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub plda_iters: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub enroll: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long, value_enum, default_value = "cosine")]
    pub backend: BackendName,
    #[command(flatten)]
    pub plda: PldaArgs,
    /// Imposter embeddings for adaptive s-norm.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// Highest cohort scores kept per side; 0 keeps all.
    #[arg(long, default_value_t = svr_core::scoring::DEFAULT_TOP_K)]
    pub top_k: usize,
    /// Reconstruction network for the reconstruct flags.
    #[arg(long)]
    pub svr: Option<PathBuf>,
    #[arg(long)]
    pub reconstruct_enroll: bool,
    #[arg(long)]
    pub reconstruct_test: bool,
    #[arg(long)]
    pub reconstruct_cohort: bool,
    #[arg(long)]
    pub length_norm: bool,
    /// [default: <out-dir>/scores.txt]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Labeled SCORES file.
    #[arg(long)]
    pub scores: PathBuf,
    /// [default: <out-dir>/report.txt]
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the DET points as CSV.
    #[arg(long)]
    pub det: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub plda: PldaArgs,
    /// Unlabeled in-domain embeddings used for adaptation.
    #[arg(long)]
    pub adapt: PathBuf,
    #[arg(long)]
    pub enroll: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub alpha_step: f64,
    /// [default: <out-dir>/sweep.csv]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum)]
pub enum Method {
    Baseline,
    Sn,
    Pa,
    Svr,
    #[value(name = "svr_sn")]
    SvrSn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Sn => "sn",
            Method::Pa => "pa",
            Method::Svr => "svr",
            Method::SvrSn => "svr_sn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum)]
pub enum Mode {
    Original,
    Degraded,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Original => "original",
            Mode::Degraded => "degraded",
        }
    }
}

#[derive(Debug, Args)]
pub struct FullExpArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub world: WorldArgs,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, value_enum, default_value = "cosine")]
    pub backend: BackendName,
    /// [default: every method the backend supports]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "original,degraded")]
    pub modes: Vec<Mode>,
    #[arg(long, default_value_t = svr_core::scoring::DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long, default_value_t = 20)]
    pub plda_iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha_step: f64,
}
