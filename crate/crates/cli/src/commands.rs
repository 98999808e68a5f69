use std::path::Path;

use svr_core::embedding::{save_trials, EmbeddingSet, ScoreSet, Trial};
use svr_core::fmt17;
use svr_core::metrics::{evaluate, write_det_csv, write_report, MetricsReport};
use svr_core::scoring::{plda_adapt, plda_train_em, save_plda, score_trials, Backend, Cohort, PldaModel, ScoreOptions};
use svr_core::sim::{degrade, generate_world, make_protocol, Protocol};
use svr_core::svr::{reconstruct, save_model, train, write_loss_curve, PairedData, TrainOutcome};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::files::*;

/// Seeds for the world, the channel and the split, all derived from `--seed`.
pub(crate) fn sub_seeds(seed: u64) -> (u64, u64, u64) {
    (seed, seed.wrapping_add(1), seed.wrapping_add(2))
}

pub(crate) fn simulate_protocol(
    world: &WorldArgs,
    channel: &ChannelArgs,
    split: &SplitArgs,
    seed: u64,
) -> CliResult<Protocol> {
    let (world_seed, channel_seed, split_seed) = sub_seeds(seed);
    let high = generate_world(&world.config(world_seed)).map_err(|e| CliError::core("world", e))?;
    let ch = channel.channel(world.dim, channel_seed);
    let low = degrade(&high, &ch).map_err(|e| CliError::core("channel", e))?;
    make_protocol(&high, &low, &split.config(split_seed)).map_err(|e| CliError::core("protocol", e))
}

/// Writes the protocol as EVEC files plus `trials.txt` under `dir`.
pub(crate) fn write_protocol(p: &Protocol, dir: &Path) -> CliResult<()> {
    let sets: [(&str, &EmbeddingSet); 6] = [
        ("train.clean.evec", p.train.high()),
        ("train.degraded.evec", p.train.low()),
        ("enroll.clean.evec", &p.enroll_high),
        ("enroll.degraded.evec", &p.enroll_low),
        ("test.clean.evec", &p.test_high),
        ("test.degraded.evec", &p.test_low),
    ];
    for (name, set) in sets {
        save_evec(&dir.join(name), set)?;
    }
    write_atomic(&dir.join("trials.txt"), |w| save_trials(&p.trials, w))
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let p = simulate_protocol(&a.world, &a.channel, &a.split, a.common.seed)?;
    write_protocol(&p, &a.common.out_dir)
}

pub(crate) fn write_training(out: &TrainOutcome, dir: &Path) -> CliResult<()> {
    write_atomic(&dir.join("svr.model"), |w| save_model(&out.params, w))?;
    write_atomic(&dir.join("loss.csv"), |w| write_loss_curve(&out.loss_curve, w))
}

pub fn train_cmd(a: &TrainArgs) -> CliResult<()> {
    let cfg = a.training.config(a.common.seed)?;
    let low = load_evec(&a.train_low)?;
    let high = load_evec(&a.train_high)?;
    let data = PairedData::new(low, high).map_err(|e| CliError::core("training pairs", e))?;
    let out = train(&data, &cfg).map_err(|e| CliError::core("training", e))?;
    write_training(&out, &a.common.out_dir)
}

pub fn reconstruct_cmd(a: &ReconstructArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let input = load_evec(&a.input)?;
    let out = reconstruct(&model, &input).map_err(|e| CliError::core(a.input.display(), e))?;
    save_evec(&output_path(&a.output, &a.common.out_dir, "reconstructed.evec"), &out)
}

pub(crate) fn fit_plda(data: &EmbeddingSet, iters: usize) -> CliResult<PldaModel> {
    plda_train_em(data, iters)
        .map(|t| t.model)
        .map_err(|e| CliError::core("PLDA training", e))
}

/// Loads or trains the PLDA model requested by `a`, if any.
fn plda_from_args(a: &PldaArgs, out_dir: &Path) -> CliResult<Option<PldaModel>> {
    if let Some(path) = &a.plda {
        return load_plda(path).map(Some);
    }
    if let Some(path) = &a.plda_train {
        let model = fit_plda(&load_evec(path)?, a.plda_iters)?;
        write_atomic(&out_dir.join("plda.model"), |w| save_plda(&model, w))?;
        return Ok(Some(model));
    }
    Ok(None)
}

pub(crate) fn plda_backend(model: &PldaModel) -> CliResult<Backend> {
    model
        .scorer()
        .map(Backend::Plda)
        .map_err(|e| CliError::core("PLDA model", e))
}

pub(crate) fn run_scoring(
    backend: &Backend,
    enroll: &EmbeddingSet,
    test: &EmbeddingSet,
    trials: &[Trial],
    opts: &ScoreOptions,
) -> CliResult<ScoreSet> {
    score_trials(backend, enroll, test, trials, opts).map_err(|e| CliError::core("scoring", e))
}

pub fn score(a: &ScoreArgs) -> CliResult<()> {
    let plda = plda_from_args(&a.plda, &a.common.out_dir)?;
    let backend = match (a.backend, plda) {
        (BackendName::Cosine, None) => Backend::Cosine,
        (BackendName::Cosine, Some(_)) => {
            return Err(CliError::Usage("--plda/--plda-train need --backend plda".into()))
        }
        (BackendName::Plda, Some(m)) => plda_backend(&m)?,
        (BackendName::Plda, None) => {
            return Err(CliError::Usage("--backend plda needs --plda or --plda-train".into()))
        }
    };
    let any_reconstruct = a.reconstruct_enroll || a.reconstruct_test || a.reconstruct_cohort;
    if any_reconstruct && a.svr.is_none() {
        return Err(CliError::Usage("reconstruct flags need --svr".into()));
    }
    if a.reconstruct_cohort && a.cohort.is_none() {
        return Err(CliError::Usage("--reconstruct-cohort needs --cohort".into()));
    }
    let svr = a.svr.as_deref().map(load_model).transpose()?;
    let cohort = match &a.cohort {
        Some(p) => Some(Cohort::new(load_evec(p)?, a.top_k).map_err(|e| CliError::core(p.display(), e))?),
        None => None,
    };
    let enroll = load_evec(&a.enroll)?;
    let test = load_evec(&a.test)?;
    let trials = load_trials(&a.trials)?;
    let opts = ScoreOptions {
        reconstruct_enroll: a.reconstruct_enroll,
        reconstruct_test: a.reconstruct_test,
        reconstruct_cohort: a.reconstruct_cohort,
        svr: svr.as_ref(),
        snorm: cohort.as_ref(),
        length_normalize: a.length_norm,
    };
    let scores = run_scoring(&backend, &enroll, &test, &trials, &opts)?;
    save_scores(&output_path(&a.output, &a.common.out_dir, "scores.txt"), &scores)
}

pub(crate) fn report_for(scores: &ScoreSet, source: &str) -> CliResult<MetricsReport> {
    evaluate(scores).map_err(|e| match e {
        svr_core::Error::MissingLabels(n) => CliError::Data(format!("{source}: {n} trials have no label")),
        other => CliError::core(source, other),
    })
}

pub(crate) fn write_report_file(report: &MetricsReport, path: &Path) -> CliResult<()> {
    write_atomic(path, |w| write_report(report, w))
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> CliResult<()> {
    let scores = load_scores(&a.scores)?;
    let report = report_for(&scores, &a.scores.display().to_string())?;
    write_report_file(&report, &output_path(&a.output, &a.common.out_dir, "report.txt"))?;
    if let Some(det) = &a.det {
        write_atomic(det, |w| write_det_csv(&report.det_points, w))?;
    }
    Ok(())
}

/// `0, step, 2 step, ..., 1`; `step` must divide 1.
pub(crate) fn alpha_grid(step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(CliError::Usage(format!("--alpha-step {step} must lie in (0, 1]")));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(CliError::Usage(format!("--alpha-step {step} does not divide 1")));
    }
    let n = n as usize;
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

pub(crate) struct SweepRow {
    pub alpha: f64,
    pub scores: ScoreSet,
    pub report: MetricsReport,
}

pub(crate) fn sweep_alpha(
    model: &PldaModel,
    adapt: &EmbeddingSet,
    grid: &[f64],
    enroll: &EmbeddingSet,
    test: &EmbeddingSet,
    trials: &[Trial],
) -> CliResult<Vec<SweepRow>> {
    grid.iter()
        .map(|&alpha| {
            let adapted = plda_adapt(model, adapt, alpha).map_err(|e| CliError::core("PLDA adaptation", e))?;
            let scores = run_scoring(&plda_backend(&adapted)?, enroll, test, trials, &ScoreOptions::default())?;
            let report = report_for(&scores, &format!("alpha {alpha}"))?;
            Ok(SweepRow { alpha, scores, report })
        })
        .collect()
}

pub fn sweep_cmd(a: &SweepArgs) -> CliResult<()> {
    let grid = alpha_grid(a.alpha_step)?;
    let model = plda_from_args(&a.plda, &a.common.out_dir)?
        .ok_or_else(|| CliError::Usage("sweep-alpha needs --plda or --plda-train".into()))?;
    let adapt = load_evec(&a.adapt)?;
    let enroll = load_evec(&a.enroll)?;
    let test = load_evec(&a.test)?;
    let trials = load_trials(&a.trials)?;
    let rows = sweep_alpha(&model, &adapt, &grid, &enroll, &test, &trials)?;
    let mut csv = String::from("alpha,eer,min_dcf_avg\n");
    for r in &rows {
        csv.push_str(&format!("{:?},{},{}\n", r.alpha, fmt17(r.report.eer), fmt17(r.report.min_dcf_avg)));
    }
    write_text(&output_path(&a.output, &a.common.out_dir, "sweep.csv"), &csv)
}
