//! Standalone entry points behind the `simulate`, `spotform` and `eval`
//! subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::pipeline::condition_label;
use crate::beamform::{delay_and_sum, BfOutputTensor};
use crate::eval::{filtered_sdr, si_sdr, DEFAULT_FILTER_TAPS};
use crate::nmf::{build_concat, fit_nmf, nmf_wiener, threshold_mask};
use crate::ntf::{build_prop_tensor, fit_ntf, ntf_wiener, RegularizationSchedule};
use crate::roomsim::{render_with_rirs, save_rirs, simulate_rirs};
use crate::signal::{istft, normalize_energy, read_wav, resample, stft, write_wav, StftConfig, WavFormat, Waveform};
use crate::{Error, Result};

/// Simulates every scene of `cfg`: RIR manifests always, and mic signals
/// plus per-array references when dry sources are configured.
pub fn run_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for spec in &cfg.scenes {
        let Some(scene) = spec.load_scene()? else {
            log::warn!("skipping RIR-manifest scene: nothing to simulate");
            continue;
        };
        let dir = out.join(condition_label(scene.arrays.len(), Some(scene.t60)));
        std::fs::create_dir_all(&dir)?;
        let scene_path = dir.join("scene.toml");
        std::fs::write(&scene_path, toml::to_string(&scene).map_err(|e| Error::Config(e.to_string()))?)?;
        files.push(scene_path);
        let rirs = simulate_rirs(&scene)?;
        files.push(save_rirs(&rirs, dir.join("rirs"))?);
        if cfg.sources.is_empty() {
            continue;
        }
        let fs = scene.sample_rate;
        let mut dry = Vec::new();
        let mut interferers = cfg.sources.iter().filter(|s| s.role == crate::roomsim::SourceRole::Interferer);
        let target = cfg.sources.iter().find(|s| s.role == crate::roomsim::SourceRole::Target);
        for role in &rirs.roles {
            let src = match role {
                crate::roomsim::SourceRole::Target => target,
                crate::roomsim::SourceRole::Interferer => interferers.next(),
            }
            .ok_or_else(|| Error::Config("not enough dry sources for the scene".into()))?;
            let w = read_wav(&src.path)?;
            dry.push(if w.sample_rate == fs { w } else { resample(&w, fs)? });
        }
        let dry = normalize_energy(&dry)?;
        let stft_cfg = StftConfig { sample_rate: fs, ..cfg.stft };
        let rendered = render_with_rirs(&rirs, &dry, &stft_cfg)?;
        let mics = dir.join("mics");
        std::fs::create_dir_all(&mics)?;
        for (a, per_array) in rendered.mic_signals.iter().enumerate() {
            for (m, w) in per_array.iter().enumerate() {
                let p = mics.join(format!("a{a}_m{m}.wav"));
                write_wav(&p, w, WavFormat::Float32)?;
                files.push(p);
            }
            let p = mics.join(format!("reference_a{a}.wav"));
            write_wav(&p, &rendered.references[a], WavFormat::Float32)?;
            files.push(p);
        }
    }
    Ok(files)
}

/// Single factorization run on existing beamformer-output WAVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpotformConfig {
    pub method: Method,
    pub k: usize,
    /// Required for ntf.
    #[serde(default)]
    pub mu: Option<f64>,
    /// Absolute activation threshold for nmf.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Threshold as a multiple of the mean activation, used when `tau` is absent.
    #[serde(default)]
    pub tau_relative: Option<f64>,
    /// One beamformer output per array, array 0 first.
    pub inputs: Vec<PathBuf>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    /// Alignment search range for the fusion; defaults to one window length.
    #[serde(default)]
    pub max_lag: Option<usize>,
    #[serde(default)]
    pub stft: StftConfig,
    /// Optional target image for scoring the fused output.
    #[serde(default)]
    pub reference: Option<PathBuf>,
}

fn default_iterations() -> usize {
    100
}

fn default_warmup() -> usize {
    50
}

impl SpotformConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: Self = toml::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.inputs.iter_mut().chain(cfg.reference.iter_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpotformOutput {
    pub files: Vec<PathBuf>,
    /// `(filtered, si)` SDR of the fused output when a reference is given.
    pub scores: Option<(f64, f64)>,
}

pub fn run_spotform(cfg: &SpotformConfig, seed: u64, out: &Path) -> Result<SpotformOutput> {
    cfg.stft.validate()?;
    if cfg.inputs.is_empty() {
        return Err(Error::Config("no beamformer outputs given".into()));
    }
    let fs = cfg.stft.sample_rate;
    let mut waves = Vec::new();
    for p in &cfg.inputs {
        let w = read_wav(p)?;
        waves.push(if w.sample_rate == fs { w } else { resample(&w, fs)? });
    }
    let length = waves[0].len();
    let specs = waves
        .into_iter()
        .map(|w| stft(&w.with_len(length), &cfg.stft))
        .collect::<Result<Vec<_>>>()?;
    let y = BfOutputTensor::from_spectrograms(&specs)?;
    let estimates = match cfg.method {
        Method::Nmf => {
            let fit = fit_nmf(&build_concat(&y), cfg.k, cfg.iterations, seed)?;
            let tau = match (cfg.tau, cfg.tau_relative) {
                (Some(t), _) => t,
                (None, Some(r)) => r * fit.model.activation.mean().unwrap_or(0.0),
                (None, None) => return Err(Error::Config("nmf needs tau or tau_relative".into())),
            };
            let mask = threshold_mask(&fit.model, y.arrays(), y.frames(), tau);
            nmf_wiener(&fit.model, &mask, &y)?
        }
        Method::Ntf => {
            let mu = cfg.mu.ok_or_else(|| Error::Config("ntf needs mu".into()))?;
            let schedule = RegularizationSchedule { mu, warmup_iterations: cfg.warmup, total_iterations: cfg.iterations };
            let fit = fit_ntf(&build_prop_tensor(&y), cfg.k, &schedule, seed)?;
            ntf_wiener(&fit.model, &fit.assignment, &y)?
        }
        Method::BfOnly => y.spectrograms(),
    };
    let per_array = estimates.iter().map(|s| istft(s, &cfg.stft, length)).collect::<Result<Vec<_>>>()?;
    let fused = delay_and_sum(&per_array, cfg.max_lag.unwrap_or(cfg.stft.window_length()))?;
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for (a, w) in per_array.iter().enumerate() {
        let p = out.join(format!("estimate_a{a}.wav"));
        write_wav(&p, w, WavFormat::Float32)?;
        files.push(p);
    }
    let p = out.join("fused.wav");
    write_wav(&p, &fused, WavFormat::Float32)?;
    files.push(p);
    let scores = match &cfg.reference {
        Some(r) => {
            let r = read_wav(r)?;
            Some((filtered_sdr(&fused, &r, DEFAULT_FILTER_TAPS)?, si_sdr(&fused, &r)?))
        }
        None => None,
    };
    Ok(SpotformOutput { files, scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPair {
    pub estimate: PathBuf,
    pub reference: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_taps")]
    pub filter_taps: usize,
    pub pairs: Vec<EvalPair>,
}

fn default_taps() -> usize {
    DEFAULT_FILTER_TAPS
}

impl EvalConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: Self = toml::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for pair in &mut cfg.pairs {
            for p in [&mut pair.estimate, &mut pair.reference] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }
}

/// Scores each pair and writes `eval.csv` when `out` is given. Returns
/// `(filtered, si)` per pair.
pub fn run_eval(cfg: &EvalConfig, out: Option<&Path>) -> Result<Vec<(f64, f64)>> {
    let mut scores = Vec::with_capacity(cfg.pairs.len());
    for pair in &cfg.pairs {
        let e: Waveform = read_wav(&pair.estimate)?;
        let r = read_wav(&pair.reference)?;
        scores.push((filtered_sdr(&e, &r, cfg.filter_taps)?, si_sdr(&e, &r)?));
    }
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        let mut w = csv::Writer::from_path(out.join("eval.csv"))?;
        w.write_record(["schema_version", "estimate", "reference", "filter_taps", "sdr_filtered_db", "sdr_si_db"])?;
        for (pair, (f, s)) in cfg.pairs.iter().zip(&scores) {
            w.write_record([
                super::SCHEMA_VERSION.to_string(),
                pair.estimate.display().to_string(),
                pair.reference.display().to_string(),
                cfg.filter_taps.to_string(),
                super::fmt_f(*f),
                super::fmt_f(*s),
            ])?;
        }
        w.flush()?;
    }
    Ok(scores)
}
