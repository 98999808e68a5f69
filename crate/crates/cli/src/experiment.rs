//! The method x enrollment-mode experiment matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use svr_core::fmt17;
use svr_core::metrics::MetricsReport;
use svr_core::scoring::{Backend, Cohort, ScoreOptions};
use svr_core::svr::{train, MlpParameters};

use crate::args::{BackendName, FullExpArgs, Method, Mode};
use crate::commands::*;
use crate::error::{CliError, CliResult};
use crate::files::{save_scores, write_text};

/// Rows are methods, each mode contributes an `EER%` and a `minDCF` column.
pub fn summarize(
    methods: &[Method],
    modes: &[Mode],
    cells: &BTreeMap<(Method, Mode), MetricsReport>,
) -> CliResult<String> {
    let mut out = String::from("method");
    for mode in modes {
        let _ = write!(out, "\t{0} EER%\t{0} minDCF", mode.name());
    }
    out.push('\n');
    for &method in methods {
        out.push_str(method.name());
        for &mode in modes {
            let r = cells.get(&(method, mode)).ok_or_else(|| CliError::MissingCell {
                method: method.name().into(),
                mode: mode.name().into(),
            })?;
            let _ = write!(out, "\t{:.1}\t{:.2}", 100.0 * r.eer, r.min_dcf_avg);
        }
        out.push('\n');
    }
    Ok(out)
}

fn default_methods(backend: BackendName) -> Vec<Method> {
    let mut m = vec![Method::Baseline, Method::Sn];
    if backend == BackendName::Plda {
        m.push(Method::Pa);
    }
    m.extend([Method::Svr, Method::SvrSn]);
    m
}

fn dedup<T: Ord + Copy>(items: &[T]) -> Vec<T> {
    let mut seen = std::collections::BTreeSet::new();
    items.iter().copied().filter(|x| seen.insert(*x)).collect()
}

pub fn full_exp(a: &FullExpArgs) -> CliResult<String> {
    let methods = if a.methods.is_empty() {
        default_methods(a.backend)
    } else {
        dedup(&a.methods)
    };
    let modes = dedup(&a.modes);
    if modes.is_empty() {
        return Err(CliError::Usage("--modes is empty".into()));
    }
    if methods.contains(&Method::Pa) && a.backend != BackendName::Plda {
        return Err(CliError::Usage("method pa needs --backend plda".into()));
    }
    let grid = if methods.contains(&Method::Pa) {
        alpha_grid(a.alpha_step)?
    } else {
        Vec::new()
    };
    let uses_svr = methods.iter().any(|m| matches!(m, Method::Svr | Method::SvrSn));
    let train_cfg = if uses_svr {
        Some(a.training.config(a.common.seed)?)
    } else {
        None
    };
    let dir = &a.common.out_dir;

    let p = simulate_protocol(&a.world, &a.channel, &a.split, a.common.seed)?;
    write_protocol(&p, &dir.join("data"))?;

    let plda = match a.backend {
        BackendName::Plda => Some(fit_plda(p.train.high(), a.plda_iters)?),
        BackendName::Cosine => None,
    };
    if let Some(m) = &plda {
        crate::files::write_atomic(&dir.join("plda.model"), |w| svr_core::scoring::save_plda(m, w))?;
    }
    let backend = match &plda {
        Some(m) => plda_backend(m)?,
        None => Backend::Cosine,
    };
    let svr: Option<MlpParameters> = match &train_cfg {
        Some(cfg) => {
            let out = train(&p.train, cfg).map_err(|e| CliError::core("training", e))?;
            write_training(&out, dir)?;
            Some(out.params)
        }
        None => None,
    };
    let cohort = Cohort::new(p.train.low().clone(), a.top_k).map_err(|e| CliError::core("cohort", e))?;

    let mut cells = BTreeMap::new();
    let mut pa_alpha = BTreeMap::new();
    for &mode in &modes {
        let enroll = match mode {
            Mode::Original => &p.enroll_high,
            Mode::Degraded => &p.enroll_low,
        };
        let test = &p.test_low;
        for &method in &methods {
            let cell_dir = dir.join(format!("{}-{}", method.name(), mode.name()));
            let svr_opts = ScoreOptions {
                reconstruct_enroll: mode == Mode::Degraded,
                reconstruct_test: true,
                svr: svr.as_ref(),
                ..Default::default()
            };
            let (scores, report, alpha) = match method {
                Method::Pa => {
                    let model = plda.as_ref().expect("pa requires plda");
                    let rows = sweep_alpha(model, p.train.low(), &grid, enroll, test, &p.trials)?;
                    // Lowest EER wins; ties keep the smaller alpha.
                    let best = rows
                        .into_iter()
                        .reduce(|best, r| if r.report.eer < best.report.eer { r } else { best })
                        .expect("non-empty grid");
                    (best.scores, best.report, Some(best.alpha))
                }
                _ => {
                    let opts = match method {
                        Method::Baseline => ScoreOptions::default(),
                        Method::Sn => ScoreOptions {
                            snorm: Some(&cohort),
                            ..Default::default()
                        },
                        Method::Svr => svr_opts,
                        Method::SvrSn => ScoreOptions {
                            snorm: Some(&cohort),
                            reconstruct_cohort: true,
                            ..svr_opts
                        },
                        Method::Pa => unreachable!(),
                    };
                    let scores = run_scoring(&backend, enroll, test, &p.trials, &opts)?;
                    let report = report_for(&scores, &format!("{}-{}", method.name(), mode.name()))?;
                    (scores, report, None)
                }
            };
            save_scores(&cell_dir.join("scores.txt"), &scores)?;
            write_report_file(&report, &cell_dir.join("report.txt"))?;
            if let Some(alpha) = alpha {
                write_text(&cell_dir.join("alpha.txt"), &format!("alpha={}\n", fmt17(alpha)))?;
                pa_alpha.insert(mode, alpha);
            }
            cells.insert((method, mode), report);
        }
    }

    let mut table = summarize(&methods, &modes, &cells)?;
    if !pa_alpha.is_empty() {
        table.push_str("# pa best alpha:");
        for (mode, alpha) in &pa_alpha {
            let _ = write!(table, " {}={alpha:?}", mode.name());
        }
        table.push('\n');
    }
    write_text(&dir.join("summary.txt"), &table)?;
    Ok(table)
}
