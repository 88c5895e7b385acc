use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use spotform::harness::{
    run_eval, run_experiment, run_simulate, run_spotform, EvalConfig, ExperimentConfig, SceneSpec, SpotformConfig,
};
use spotform::roomsim::Scene;

#[derive(Parser)]
#[command(name = "spotform", version, about = "Multi-array spotforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Master seed (run) or factorization seed (spotform).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate RIRs (and mic signals when dry sources are given) for each scene.
    Simulate(Common),
    /// Run the full sweep described by an experiment config.
    Run(Common),
    /// Run one factorization on existing beamformer-output WAVs.
    Spotform(Common),
    /// Score estimate/reference WAV pairs.
    Eval(Common),
}

fn global_pool(workers: Option<usize>) -> Result<()> {
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().context("building worker pool")?;
    }
    Ok(())
}

/// Experiment config, or a bare scene file wrapped as a one-scene experiment.
fn simulate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match ExperimentConfig::from_file(path) {
        Ok(cfg) => Ok(cfg),
        Err(exp_err) => {
            Scene::from_toml(&text).with_context(|| format!("{} is neither an experiment ({exp_err}) nor a scene", path.display()))?;
            Ok(ExperimentConfig { scenes: vec![SceneSpec::File { path: path.to_path_buf() }], ..Default::default() })
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(c) => {
            global_pool(c.workers)?;
            let cfg = simulate_config(&c.config)?;
            let out = c.out.unwrap_or_else(|| cfg.output_dir.clone());
            let files = run_simulate(&cfg, &out)?;
            log::info!("wrote {} files under {}", files.len(), out.display());
        }
        Command::Run(c) => {
            let mut cfg = ExperimentConfig::from_file(&c.config)?;
            if let Some(s) = c.seed {
                cfg.master_seed = s;
            }
            if let Some(w) = c.workers {
                cfg.workers = w;
            }
            if let Some(o) = c.out {
                cfg.output_dir = o;
            }
            let out = run_experiment(&cfg)?;
            let failed = out.rows.iter().filter(|r| !r.outcome.is_ok()).count();
            log::info!("{} rows ({failed} failed) in {}", out.rows.len(), cfg.output_dir.display());
            if failed == out.rows.len() {
                bail!("every run failed; see results.csv");
            }
        }
        Command::Spotform(c) => {
            global_pool(c.workers)?;
            let cfg = SpotformConfig::from_file(&c.config)?;
            let out = c.out.unwrap_or_else(|| PathBuf::from("spotform_out"));
            let res = run_spotform(&cfg, c.seed.unwrap_or(0), &out)?;
            for f in &res.files {
                println!("{}", f.display());
            }
            if let Some((filtered, si)) = res.scores {
                println!("sdr_filtered_db={filtered} sdr_si_db={si}");
            }
        }
        Command::Eval(c) => {
            global_pool(c.workers)?;
            let cfg = EvalConfig::from_file(&c.config)?;
            let scores = run_eval(&cfg, c.out.as_deref())?;
            for (pair, (filtered, si)) in cfg.pairs.iter().zip(scores) {
                println!("{}\t{filtered}\t{si}", pair.estimate.display());
            }
        }
    }
    Ok(())
}
