//! Experiment orchestration: configuration, the simulate, beamform,
//! factorize, reconstruct and score pipeline, sweeps, and CSV output.

mod commands;
mod config;
mod output;
mod pipeline;
mod seeding;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

pub use commands::{run_eval, run_simulate, run_spotform, EvalConfig, EvalPair, SpotformConfig, SpotformOutput};
pub use config::{default_tau_relative, DrySource, ExperimentConfig, Method, SceneSpec, TauSpec};
pub use output::{
    emit_plots, fmt_f, row_order, summarize, top_taus, write_results, write_summary, write_timings, write_top_taus,
    ArrayTag, SummaryRow, SCHEMA_VERSION,
};
pub use pipeline::{
    condition_label, prepare_condition, run_bf_only, run_nmf, run_ntf, run_single, spec_summary, wav_dir, Hyper,
    Outcome, PreparedCondition, ResultRow, RunSpec,
};
pub use seeding::{splitmix64, stream_seed};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ConditionInfo {
    label: String,
    arrays: usize,
    t60: Option<f64>,
    samples: Option<usize>,
    frames: Option<usize>,
    bins: Option<usize>,
    max_lag: Option<usize>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    schema_version: u32,
    tool_version: &'static str,
    config: &'a ExperimentConfig,
    taus: Vec<TauSpec>,
    conditions: Vec<ConditionInfo>,
    planned_rows: usize,
    rows: usize,
    failed_rows: usize,
    files: Vec<PathBuf>,
}

enum Job {
    Bf,
    Nmf { k: usize, seed: usize },
    Ntf { k: usize, mu: f64, seed: usize },
}

/// Rows a condition with `arrays` arrays should produce.
pub fn planned_rows(cfg: &ExperimentConfig, arrays: usize) -> usize {
    cfg.method_list()
        .iter()
        .map(|m| match m {
            Method::BfOnly => arrays * cfg.seeds,
            Method::Nmf => cfg.k_grid.len() * cfg.taus().len() * cfg.seeds,
            Method::Ntf => cfg.k_grid.len() * cfg.mu.len() * cfg.seeds,
        })
        .sum()
}

fn failed_condition_rows(cfg: &ExperimentConfig, index: usize, err: &Error) -> Vec<ResultRow> {
    let (arrays, t60) = spec_summary(&cfg.scenes[index]);
    let reason = format!("condition setup failed: {err}");
    let mut rows = Vec::new();
    let mut push = |method, k, hyper, seed, array| {
        rows.push(ResultRow {
            condition_index: index,
            condition: condition_label(arrays, t60),
            method,
            arrays,
            t60,
            k,
            hyper,
            seed,
            stream_seed: None,
            array,
            outcome: Outcome::Failed { reason: reason.clone() },
            runtime_ms: 0.0,
        })
    };
    for seed in 0..cfg.seeds {
        for m in cfg.method_list() {
            match m {
                Method::BfOnly => (0..arrays.max(1)).for_each(|a| push(m, None, None, seed, Some(a))),
                Method::Nmf => {
                    for &k in &cfg.k_grid {
                        for t in cfg.taus() {
                            push(m, Some(k), Some(Hyper::Tau(t)), seed, None);
                        }
                    }
                }
                Method::Ntf => {
                    for &k in &cfg.k_grid {
                        for &mu in &cfg.mu {
                            push(m, Some(k), Some(Hyper::Mu(mu)), seed, None);
                        }
                    }
                }
            }
        }
    }
    rows
}

/// Runs every configured combination and writes results.csv, summary.csv,
/// nmf_top_tau.csv, timings.csv, plot series and run_manifest.json to
/// `cfg.output_dir`. Stage failures become failed rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let wav_out = cfg.write_wavs.then_some(out.as_path());
    let taus = cfg.taus();
    let mut rows = Vec::new();
    let mut conditions = Vec::new();
    let mut planned = 0;
    for index in 0..cfg.scenes.len() {
        let prepared = pool.install(|| prepare_condition(cfg, index));
        let cond = match prepared {
            Ok(c) => c,
            Err(e) => {
                log::error!("condition {index}: {e}");
                let failed = failed_condition_rows(cfg, index, &e);
                planned += failed.len();
                let (arrays, t60) = spec_summary(&cfg.scenes[index]);
                conditions.push(ConditionInfo {
                    label: condition_label(arrays, t60),
                    arrays,
                    t60,
                    samples: None,
                    frames: None,
                    bins: None,
                    max_lag: None,
                    error: Some(e.to_string()),
                });
                rows.extend(failed);
                continue;
            }
        };
        log::info!("{}: {} samples, {} frames", cond.label, cond.length, cond.bf.frames());
        planned += planned_rows(cfg, cond.arrays);
        conditions.push(ConditionInfo {
            label: cond.label.clone(),
            arrays: cond.arrays,
            t60: cond.t60,
            samples: Some(cond.length),
            frames: Some(cond.bf.frames()),
            bins: Some(cond.bf.bins()),
            max_lag: Some(cond.max_lag),
            error: None,
        });
        let mut jobs = Vec::new();
        for m in cfg.method_list() {
            match m {
                Method::BfOnly => jobs.push(Job::Bf),
                Method::Nmf => {
                    for &k in &cfg.k_grid {
                        jobs.extend((0..cfg.seeds).map(|seed| Job::Nmf { k, seed }));
                    }
                }
                Method::Ntf => {
                    for &k in &cfg.k_grid {
                        for &mu in &cfg.mu {
                            jobs.extend((0..cfg.seeds).map(|seed| Job::Ntf { k, mu, seed }));
                        }
                    }
                }
            }
        }
        let produced: Vec<Vec<ResultRow>> = pool.install(|| {
            jobs.par_iter()
                .map(|job| match *job {
                    Job::Bf => run_bf_only(&cond, cfg, wav_out),
                    Job::Nmf { k, seed } => run_nmf(&cond, cfg, k, seed, &taus, wav_out).into_iter().map(|(_, r)| r).collect(),
                    Job::Ntf { k, mu, seed } => vec![run_ntf(&cond, cfg, k, mu, seed, wav_out).1],
                })
                .collect()
        });
        rows.extend(produced.into_iter().flatten());
    }
    rows.sort_by(row_order);
    if rows.len() != planned {
        log::error!("produced {} rows, planned {planned}", rows.len());
    }

    let summary = summarize(&rows);
    let mut files = vec![out.join("results.csv"), out.join("summary.csv"), out.join("nmf_top_tau.csv"), out.join("timings.csv")];
    write_results(&files[0], &rows)?;
    write_summary(&files[1], &summary)?;
    write_top_taus(&files[2], &summary)?;
    write_timings(&files[3], &rows)?;
    files.extend(emit_plots(&out, &summary)?);
    let manifest_path = out.join("run_manifest.json");
    files.push(manifest_path.clone());
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        taus,
        conditions,
        planned_rows: planned,
        rows: rows.len(),
        failed_rows: rows.iter().filter(|r| !r.outcome.is_ok()).count(),
        files: files.clone(),
    };
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(ExperimentOutput { rows, summary, files })
}
