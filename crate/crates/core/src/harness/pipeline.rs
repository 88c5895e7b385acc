use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{ExperimentConfig, Method, SceneSpec, TauSpec};
use super::seeding::stream_seed;
use crate::beamform::{default_max_lag, delay_and_sum, mvdr, oracle_quantities, BfOutputTensor};
use crate::eval::{filtered_sdr, si_sdr};
use crate::nmf::{build_concat, dump_model, fit_nmf_observed, nmf_wiener, threshold_mask};
use crate::ntf::{build_prop_tensor, dump_fit, fit_ntf_observed, ntf_wiener, RegularizationSchedule};
use crate::roomsim::{load_rirs, render_with_rirs, simulate_rirs, RirSet, SourceRole};
use crate::signal::{istft, normalize_energy, read_wav, resample, write_wav, ComplexSpectrogram, WavFormat, Waveform};
use crate::{Error, Result};

/// Hyperparameter of a factorization run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Hyper {
    Tau(TauSpec),
    Mu(f64),
}

impl Hyper {
    pub fn kind(self) -> &'static str {
        match self {
            Hyper::Tau(t) => t.kind(),
            Hyper::Mu(_) => "mu",
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Hyper::Tau(t) => t.value(),
            Hyper::Mu(m) => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSpec {
    pub method: Method,
    pub k: Option<usize>,
    pub hyper: Option<Hyper>,
    pub seed_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Outcome {
    Ok { sdr_filtered_db: f64, sdr_si_db: f64 },
    Failed { reason: String },
}

impl Outcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, Outcome::Ok { .. })
    }

    pub fn filtered(&self) -> Option<f64> {
        match self {
            Outcome::Ok { sdr_filtered_db, .. } => Some(*sdr_filtered_db),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn si(&self) -> Option<f64> {
        match self {
            Outcome::Ok { sdr_si_db, .. } => Some(*sdr_si_db),
            Outcome::Failed { .. } => None,
        }
    }
}

/// One scored output. `array` is `None` for the fused output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub condition_index: usize,
    pub condition: String,
    pub method: Method,
    pub arrays: usize,
    pub t60: Option<f64>,
    pub k: Option<usize>,
    pub hyper: Option<Hyper>,
    pub seed: usize,
    pub stream_seed: Option<u64>,
    pub array: Option<usize>,
    pub outcome: Outcome,
    pub runtime_ms: f64,
}

/// Everything shared by the runs of one acoustic condition.
#[derive(Debug, Clone)]
pub struct PreparedCondition {
    pub index: usize,
    pub label: String,
    pub arrays: usize,
    pub t60: Option<f64>,
    pub length: usize,
    pub bf: BfOutputTensor<f64>,
    /// Target image at each array's reference mic.
    pub references: Vec<Waveform>,
    pub max_lag: usize,
    pub prepare_ms: f64,
}

pub fn condition_label(arrays: usize, t60: Option<f64>) -> String {
    match t60 {
        Some(t) => format!("A{arrays}_T{}ms", (t * 1000.0).round() as i64),
        None => format!("A{arrays}_Tunknown"),
    }
}

/// Array count and T60 known before any file is read.
pub fn spec_summary(spec: &SceneSpec) -> (usize, Option<f64>) {
    match spec {
        SceneSpec::Preset { arrays, t60 } => (*arrays, Some(*t60)),
        SceneSpec::File { .. } => spec.load_scene().ok().flatten().map_or((0, None), |s| (s.arrays.len(), Some(s.t60))),
        SceneSpec::Rirs { t60, .. } => (0, *t60),
    }
}

fn load_dry(cfg: &ExperimentConfig) -> Result<(Waveform, Vec<Waveform>)> {
    let fs = cfg.stft.sample_rate;
    let mut target = None;
    let mut interferers = Vec::new();
    for src in &cfg.sources {
        let mut w = read_wav(&src.path)?;
        if w.sample_rate != fs {
            w = resample(&w, fs)?;
        }
        match src.role {
            SourceRole::Target => target = Some(w),
            SourceRole::Interferer => interferers.push(w),
        }
    }
    let target = target.ok_or_else(|| Error::Config("no target dry source".into()))?;
    Ok((target, interferers))
}

/// Orders the dry sources to match the RIR set's roles and normalizes them.
fn match_sources(rirs: &RirSet, target: &Waveform, interferers: &[Waveform]) -> Result<Vec<Waveform>> {
    let mut next = interferers.iter();
    let mut out = Vec::with_capacity(rirs.sources());
    for role in &rirs.roles {
        out.push(match role {
            SourceRole::Target => target.clone(),
            SourceRole::Interferer => next
                .next()
                .ok_or_else(|| {
                    Error::Config(format!(
                        "scene has {} interferers, only {} interferer WAVs given",
                        rirs.roles.iter().filter(|&&r| r == SourceRole::Interferer).count(),
                        interferers.len()
                    ))
                })?
                .clone(),
        });
    }
    if next.len() > 0 {
        log::warn!("{} interferer WAVs unused by this scene", next.len());
    }
    normalize_energy(&out)
}

fn peak_index(taps: &[f64]) -> usize {
    taps.iter()
        .enumerate()
        .fold((0, 0.0), |best, (i, &t)| if t.abs() > best.1 { (i, t.abs()) } else { best })
        .0
}

/// Simulates or loads RIRs, renders the scene and applies the oracle MVDR.
pub fn prepare_condition(cfg: &ExperimentConfig, index: usize) -> Result<PreparedCondition> {
    let start = Instant::now();
    let spec = cfg.scenes.get(index).ok_or_else(|| Error::Config(format!("no scene {index}")))?;
    let stft = cfg.stft;
    stft.validate()?;
    let (rirs, t60, max_lag) = match spec.load_scene()? {
        Some(scene) => {
            if scene.sample_rate != stft.sample_rate {
                return Err(Error::SampleRateMismatch { expected: stft.sample_rate, found: scene.sample_rate });
            }
            let lag = default_max_lag(scene.max_array_distance(), scene.sound_speed, scene.sample_rate);
            (simulate_rirs(&scene)?, Some(scene.t60), lag)
        }
        None => {
            let SceneSpec::Rirs { path, t60 } = spec else { unreachable!() };
            let rirs = load_rirs(path)?;
            // without geometry, bound the lag by the spread of target peaks
            let peaks: Vec<usize> =
                (0..rirs.arrays()).map(|a| peak_index(&rirs.get(rirs.target_index(), a, 0).taps)).collect();
            let spread = peaks.iter().max().unwrap_or(&0) - peaks.iter().min().unwrap_or(&0);
            (rirs, *t60, spread + 32)
        }
    };
    let (target, interferers) = load_dry(cfg)?;
    let dry = match_sources(&rirs, &target, &interferers)?;
    let rendered = render_with_rirs(&rirs, &dry, &stft)?;
    let (d, r) = oracle_quantities(&rirs, &stft)?;
    let bf = mvdr(&rendered.observations, &d, &r)?.outputs;
    Ok(PreparedCondition {
        index,
        label: condition_label(rirs.arrays(), t60),
        arrays: rirs.arrays(),
        t60,
        length: rendered.length,
        bf,
        references: rendered.references,
        max_lag,
        prepare_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn to_waveforms(cond: &PreparedCondition, specs: &[ComplexSpectrogram], cfg: &ExperimentConfig) -> Result<Vec<Waveform>> {
    specs.iter().map(|s| istft(s, &cfg.stft, cond.length)).collect()
}

fn score(estimate: &Waveform, reference: &Waveform, taps: usize) -> Result<Outcome> {
    Ok(Outcome::Ok { sdr_filtered_db: filtered_sdr(estimate, reference, taps)?, sdr_si_db: si_sdr(estimate, reference)? })
}

fn run_name(spec: &RunSpec) -> String {
    let mut s = spec.method.label().to_string();
    if let Some(k) = spec.k {
        s += &format!("_K{k}");
    }
    if let Some(h) = spec.hyper {
        s += &format!("_{}{}", h.kind(), h.value());
    }
    s + &format!("_s{}", spec.seed_index)
}

fn write_outputs(dir: &Path, name: &str, per_array: &[Waveform], fused: &Waveform) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(per_array.len() + 1);
    for (a, w) in per_array.iter().enumerate() {
        let p = dir.join(format!("{name}_a{a}.wav"));
        write_wav(&p, w, WavFormat::Float32)?;
        paths.push(p);
    }
    let p = dir.join(format!("{name}_fused.wav"));
    write_wav(&p, fused, WavFormat::Float32)?;
    paths.push(p);
    Ok(paths)
}

pub fn wav_dir(out: &Path, cond: &PreparedCondition) -> PathBuf {
    out.join("wavs").join(&cond.label)
}

fn base_row(cond: &PreparedCondition, spec: &RunSpec, stream: Option<u64>) -> ResultRow {
    ResultRow {
        condition_index: cond.index,
        condition: cond.label.clone(),
        method: spec.method,
        arrays: cond.arrays,
        t60: cond.t60,
        k: spec.k,
        hyper: spec.hyper,
        seed: spec.seed_index,
        stream_seed: stream,
        array: None,
        outcome: Outcome::Failed { reason: String::new() },
        runtime_ms: 0.0,
    }
}

fn failed(mut row: ResultRow, err: &Error, started: Instant) -> ResultRow {
    row.outcome = Outcome::Failed { reason: err.to_string() };
    row.runtime_ms = started.elapsed().as_secs_f64() * 1e3;
    row
}

fn deadline_observer<F>(started: Instant, timeout_secs: f64) -> impl FnMut(usize, F) -> ControlFlow<()> {
    move |_, _| {
        if started.elapsed().as_secs_f64() > timeout_secs {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }
}

fn timeout_reason(err: Error, timeout_secs: f64) -> Error {
    match err {
        Error::Stopped(msg) => Error::Stopped(format!("timeout after {timeout_secs} s ({msg})")),
        e => e,
    }
}

/// Scores the raw beamformer outputs; one row per array, replicated over seeds.
pub fn run_bf_only(cond: &PreparedCondition, cfg: &ExperimentConfig, out: Option<&Path>) -> Vec<ResultRow> {
    let started = Instant::now();
    let spec = RunSpec { method: Method::BfOnly, k: None, hyper: None, seed_index: 0 };
    let per_array = match to_waveforms(cond, &cond.bf.spectrograms(), cfg) {
        Ok(w) => w,
        Err(e) => {
            let row = failed(base_row(cond, &spec, None), &e, started);
            return replicate_bf(cond, cfg, |a| ResultRow { array: Some(a), ..row.clone() });
        }
    };
    if let Some(out) = out {
        if let Err(e) = delay_and_sum(&per_array, cond.max_lag)
            .and_then(|fused| write_outputs(&wav_dir(out, cond), "bf-only", &per_array, &fused))
        {
            log::warn!("{}: writing bf-only WAVs failed: {e}", cond.label);
        }
    }
    let outcomes: Vec<Outcome> = per_array
        .iter()
        .zip(&cond.references)
        .map(|(w, r)| score(w, r, cfg.filter_taps).unwrap_or_else(|e| Outcome::Failed { reason: e.to_string() }))
        .collect();
    let ms = started.elapsed().as_secs_f64() * 1e3 + cond.prepare_ms;
    replicate_bf(cond, cfg, |a| ResultRow {
        array: Some(a),
        outcome: outcomes[a].clone(),
        runtime_ms: ms,
        ..base_row(cond, &spec, None)
    })
}

fn replicate_bf(cond: &PreparedCondition, cfg: &ExperimentConfig, row: impl Fn(usize) -> ResultRow) -> Vec<ResultRow> {
    (0..cfg.seeds)
        .flat_map(|s| (0..cond.arrays).map(move |a| (s, a)))
        .map(|(s, a)| ResultRow { seed: s, ..row(a) })
        .collect()
}

/// Istft, fuse, optionally write, then score the fused output against array 0's reference.
fn finish(
    cond: &PreparedCondition,
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    specs: Result<Vec<ComplexSpectrogram>>,
    out: Option<&Path>,
) -> Result<(Vec<PathBuf>, Outcome)> {
    let per_array = to_waveforms(cond, &specs?, cfg)?;
    let fused = delay_and_sum(&per_array, cond.max_lag)?;
    let paths = match out {
        Some(out) => write_outputs(&wav_dir(out, cond), &run_name(spec), &per_array, &fused)?,
        None => Vec::new(),
    };
    Ok((paths, score(&fused, &cond.references[0], cfg.filter_taps)?))
}

fn dump(out: Option<&Path>, cfg: &ExperimentConfig, cond: &PreparedCondition, name: &str, text: impl FnOnce() -> String) {
    if let (Some(out), true) = (out, cfg.dump_models) {
        let dir = out.join("models").join(&cond.label);
        let res = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(dir.join(format!("{name}.txt")), text()));
        if let Err(e) = res {
            log::warn!("model dump {name} failed: {e}");
        }
    }
}

/// One NMF fit for `(K, seed)`, thresholded at every entry of `taus`.
pub fn run_nmf(
    cond: &PreparedCondition,
    cfg: &ExperimentConfig,
    k: usize,
    seed_index: usize,
    taus: &[TauSpec],
    out: Option<&Path>,
) -> Vec<(Vec<PathBuf>, ResultRow)> {
    let started = Instant::now();
    let stream = stream_seed(cfg.master_seed, Method::Nmf, Some(k), None, seed_index);
    let spec_for = |tau: TauSpec| RunSpec { method: Method::Nmf, k: Some(k), hyper: Some(Hyper::Tau(tau)), seed_index };
    let c = build_concat(&cond.bf);
    let fit = fit_nmf_observed(&c, k, cfg.iterations, stream, deadline_observer(started, cfg.timeout_secs))
        .map_err(|e| timeout_reason(e, cfg.timeout_secs));
    let fit = match fit {
        Ok(f) => f,
        Err(e) => {
            return taus.iter().map(|&t| (Vec::new(), failed(base_row(cond, &spec_for(t), Some(stream)), &e, started))).collect()
        }
    };
    let fit_ms = started.elapsed().as_secs_f64() * 1e3;
    dump(out, cfg, cond, &format!("nmf_K{k}_s{seed_index}"), || dump_model(&fit.model, stream));
    let mean_activation = fit.model.activation.mean().unwrap_or(0.0);
    taus.iter()
        .map(|&tau| {
            let t0 = Instant::now();
            let spec = spec_for(tau);
            let threshold = match tau {
                TauSpec::Absolute(v) => v,
                TauSpec::Relative(r) => r * mean_activation,
            };
            let mask = threshold_mask(&fit.model, cond.arrays, cond.bf.frames(), threshold);
            let specs = nmf_wiener(&fit.model, &mask, &cond.bf);
            let mut row = base_row(cond, &spec, Some(stream));
            let (paths, outcome) = match finish(cond, cfg, &spec, specs, out) {
                Ok(v) => v,
                Err(e) => (Vec::new(), Outcome::Failed { reason: e.to_string() }),
            };
            row.outcome = outcome;
            row.runtime_ms = fit_ms + t0.elapsed().as_secs_f64() * 1e3;
            (paths, row)
        })
        .collect()
}

pub fn run_ntf(
    cond: &PreparedCondition,
    cfg: &ExperimentConfig,
    k: usize,
    mu: f64,
    seed_index: usize,
    out: Option<&Path>,
) -> (Vec<PathBuf>, ResultRow) {
    let started = Instant::now();
    let stream = stream_seed(cfg.master_seed, Method::Ntf, Some(k), Some(mu), seed_index);
    let spec = RunSpec { method: Method::Ntf, k: Some(k), hyper: Some(Hyper::Mu(mu)), seed_index };
    let row = base_row(cond, &spec, Some(stream));
    let schedule = RegularizationSchedule { mu, warmup_iterations: cfg.warmup, total_iterations: cfg.iterations };
    let c = build_prop_tensor(&cond.bf);
    let fit = fit_ntf_observed(&c, k, &schedule, stream, deadline_observer(started, cfg.timeout_secs))
        .map_err(|e| timeout_reason(e, cfg.timeout_secs));
    let fit = match fit {
        Ok(f) => f,
        Err(e) => return (Vec::new(), failed(row, &e, started)),
    };
    dump(out, cfg, cond, &format!("ntf_K{k}_mu{mu}_s{seed_index}"), || dump_fit(&fit));
    let specs = ntf_wiener(&fit.model, &fit.assignment, &cond.bf);
    match finish(cond, cfg, &spec, specs, out) {
        Ok((paths, outcome)) => {
            let runtime_ms = started.elapsed().as_secs_f64() * 1e3;
            (paths, ResultRow { outcome, runtime_ms, ..row })
        }
        Err(e) => (Vec::new(), failed(row, &e, started)),
    }
}

/// Runs one `(method, K, hyper, seed)` combination and returns the written
/// WAVs (per-array estimates then the fused output) with its row. For
/// bf-only this yields the row of array 0.
pub fn run_single(
    cond: &PreparedCondition,
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    out: Option<&Path>,
) -> Result<(Vec<PathBuf>, ResultRow)> {
    match (spec.method, spec.k, spec.hyper) {
        (Method::BfOnly, _, _) => {
            let rows = run_bf_only(cond, cfg, out);
            let paths = match out {
                Some(out) => {
                    let dir = wav_dir(out, cond);
                    let mut p: Vec<PathBuf> = (0..cond.arrays).map(|a| dir.join(format!("bf-only_a{a}.wav"))).collect();
                    p.push(dir.join("bf-only_fused.wav"));
                    p
                }
                None => Vec::new(),
            };
            let row = rows.into_iter().find(|r| r.seed == spec.seed_index.min(cfg.seeds - 1)).expect("bf rows");
            Ok((paths, row))
        }
        (Method::Nmf, Some(k), Some(Hyper::Tau(tau))) => {
            Ok(run_nmf(cond, cfg, k, spec.seed_index, &[tau], out).pop().expect("one threshold"))
        }
        (Method::Ntf, Some(k), Some(Hyper::Mu(mu))) => Ok(run_ntf(cond, cfg, k, mu, spec.seed_index, out)),
        _ => Err(Error::Config(format!("incomplete run description {spec:?}"))),
    }
}
