//! Seeded training runs and cost-limit sweeps with their files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::envs::Environment;
use crate::epo::{train, TrainOutcome, Variant};
use crate::error::{Error, Result};
use crate::metrics::write_csv;

use super::ExperimentConfig;

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub csv_paths: Vec<PathBuf>,
    pub config_path: PathBuf,
    /// One per seed, in seed order.
    pub outcomes: Vec<TrainOutcome>,
}

/// Preset name, or the file stem of a spec path.
pub fn env_label(env: &str) -> String {
    Path::new(env)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| env.to_owned())
}

pub fn csv_file_name(env: &str, variant: Variant, seed: u64, suffix: &str) -> String {
    format!("{}_{}_seed{}{}.csv", env_label(env), variant, seed, suffix)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", dir.display())))
    })
}

fn run_with_suffix(cfg: &ExperimentConfig, suffix: &str) -> Result<RunArtifacts> {
    cfg.validate()?;
    prepare_dir(&cfg.out_dir)?;
    let config_path = cfg.out_dir.join(format!("run{suffix}.json"));
    fs::write(&config_path, serde_json::to_string_pretty(cfg)?)?;
    let mut csv_paths = Vec::with_capacity(cfg.seeds.len());
    let mut outcomes = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut env = Environment::resolve(&cfg.env, seed)?;
        let outcome = train(&mut env, &cfg.penalty, seed).map_err(|e| match e {
            Error::Numeric { context, value } => Error::Numeric {
                context: format!("seed {seed}: {context}"),
                value,
            },
            other => other,
        })?;
        let path = cfg.out_dir.join(csv_file_name(&cfg.env, cfg.penalty.variant, seed, suffix));
        write_csv(&path, &outcome.metrics)?;
        log::info!("wrote {}", path.display());
        csv_paths.push(path);
        outcomes.push(outcome);
    }
    Ok(RunArtifacts { csv_paths, config_path, outcomes })
}

/// One CSV per seed plus a `run.json` echo of the resolved configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    run_with_suffix(cfg, "")
}

/// One experiment per limit; files carry a `_d<limit>` suffix.
pub fn sweep_cost_limit(cfg: &ExperimentConfig, limits: &[f64]) -> Result<Vec<RunArtifacts>> {
    if limits.is_empty() || limits.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::Usage(format!("cost limits must be positive, got {limits:?}")));
    }
    limits
        .iter()
        .map(|&d| {
            let mut c = cfg.clone();
            c.penalty.cost_limit = d;
            run_with_suffix(&c, &format!("_d{d}"))
        })
        .collect()
}
