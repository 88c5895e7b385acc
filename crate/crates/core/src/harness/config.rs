use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::roomsim::{Scene, SourceRole};
use crate::signal::StftConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BfOnly,
    Nmf,
    Ntf,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::BfOnly => "bf-only",
            Method::Nmf => "nmf",
            Method::Ntf => "ntf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Where a condition's acoustics come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SceneSpec {
    Preset {
        arrays: usize,
        #[serde(default)]
        t60: f64,
    },
    /// Scene TOML file.
    File { path: PathBuf },
    /// RIR manifest directory or index file; `t60` only labels the output.
    Rirs {
        path: PathBuf,
        #[serde(default)]
        t60: Option<f64>,
    },
}

impl SceneSpec {
    pub fn load_scene(&self) -> Result<Option<Scene>> {
        match self {
            SceneSpec::Preset { arrays, t60 } => Scene::preset(*arrays, *t60).map(Some),
            SceneSpec::File { path } => Scene::from_toml(&std::fs::read_to_string(path)?).map(Some),
            SceneSpec::Rirs { .. } => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrySource {
    pub path: PathBuf,
    pub role: SourceRole,
}

/// Resolved experiment description; see the README for the TOML layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenes: Vec<SceneSpec>,
    pub sources: Vec<DrySource>,
    pub stft: StftConfig,
    pub methods: Vec<Method>,
    pub k_grid: Vec<usize>,
    /// Absolute thresholds on the raw NMF activations.
    pub tau: Option<Vec<f64>>,
    /// Thresholds as multiples of each fit's mean activation; used when
    /// `tau` is absent.
    pub tau_relative: Option<Vec<f64>>,
    pub mu: Vec<f64>,
    pub seeds: usize,
    pub master_seed: u64,
    pub iterations: usize,
    pub warmup: usize,
    pub filter_taps: usize,
    pub timeout_secs: f64,
    /// 0 uses one worker per core.
    pub workers: usize,
    pub output_dir: PathBuf,
    pub write_wavs: bool,
    pub dump_models: bool,
}

/// Twelve multipliers spaced geometrically from 1e-3 to 2.
pub fn default_tau_relative() -> Vec<f64> {
    let (lo, hi, n) = (1e-3f64, 2.0f64, 12);
    (0..n)
        .map(|p| {
            let x = (lo.ln() + (hi.ln() - lo.ln()) * p as f64 / (n - 1) as f64).exp();
            // four significant digits keep labels readable
            let scale = 10f64.powi(3 - x.log10().floor() as i32);
            (x * scale).round() / scale
        })
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenes: vec![SceneSpec::Preset { arrays: 2, t60: 0.0 }],
            sources: Vec::new(),
            stft: StftConfig::default(),
            methods: vec![Method::BfOnly, Method::Nmf, Method::Ntf],
            k_grid: vec![10, 20, 30, 40, 50],
            tau: None,
            tau_relative: None,
            mu: vec![1.0, 10.0, 100.0, 1000.0],
            seeds: 10,
            master_seed: 0,
            iterations: 100,
            warmup: 50,
            filter_taps: crate::eval::DEFAULT_FILTER_TAPS,
            timeout_secs: 600.0,
            workers: 0,
            output_dir: PathBuf::from("results"),
            write_wavs: true,
            dump_models: false,
        }
    }
}

/// NMF threshold as configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum TauSpec {
    Absolute(f64),
    Relative(f64),
}

impl TauSpec {
    pub fn value(self) -> f64 {
        match self {
            TauSpec::Absolute(v) | TauSpec::Relative(v) => v,
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            TauSpec::Absolute(_) => "tau",
            TauSpec::Relative(_) => "tau-rel",
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut self.sources {
            fix(&mut s.path);
        }
        for sc in &mut self.scenes {
            match sc {
                SceneSpec::File { path } | SceneSpec::Rirs { path, .. } => fix(path),
                SceneSpec::Preset { .. } => {}
            }
        }
        fix(&mut self.output_dir);
    }

    pub fn taus(&self) -> Vec<TauSpec> {
        match (&self.tau, &self.tau_relative) {
            (Some(t), _) => t.iter().map(|&v| TauSpec::Absolute(v)).collect(),
            (None, Some(r)) => r.iter().map(|&v| TauSpec::Relative(v)).collect(),
            (None, None) => default_tau_relative().into_iter().map(TauSpec::Relative).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.scenes.is_empty() {
            return bad("no scenes configured".into());
        }
        let targets = self.sources.iter().filter(|s| s.role == SourceRole::Target).count();
        if targets != 1 {
            return bad(format!("{targets} target dry sources, exactly 1 required"));
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        let factorizes = self.methods.iter().any(|&m| m != Method::BfOnly);
        if factorizes && (self.k_grid.is_empty() || self.k_grid.contains(&0)) {
            return bad("K grid must be nonempty with K >= 1".into());
        }
        if factorizes && self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.methods.contains(&Method::Nmf) {
            let taus = self.taus();
            if taus.is_empty() || taus.iter().any(|t| !(t.value() >= 0.0)) {
                return bad("tau list must be nonempty and nonnegative".into());
            }
        }
        if self.methods.contains(&Method::Ntf) {
            if self.mu.is_empty() || self.mu.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
                return bad("mu list must be nonempty, finite and nonnegative".into());
            }
            if self.warmup > self.iterations {
                return bad(format!("warmup {} exceeds iterations {}", self.warmup, self.iterations));
            }
        }
        if self.filter_taps == 0 {
            return bad("filter_taps must be at least 1".into());
        }
        if !(self.timeout_secs > 0.0) {
            return bad("timeout_secs must be positive".into());
        }
        self.stft.validate()
    }

    /// Ordered unique methods.
    pub fn method_list(&self) -> Vec<Method> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }
}
