//! Flat `key = value` experiment files.

use std::path::PathBuf;

use serde::Serialize;

use crate::envs::Environment;
use crate::epo::{PenaltyConfig, Variant};
use crate::error::{Error, Result};
use crate::rollout::DStepMode;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "EPO_OUT";

pub const CONFIG_KEYS: [&str; 22] = [
    "env",
    "variant",
    "seeds",
    "out_dir",
    "mu0",
    "mu_decay",
    "clip_eps",
    "kl_budget",
    "cost_limit",
    "gamma",
    "gae_lambda",
    "inner_iters",
    "epochs",
    "steps_per_epoch",
    "lagrangian_lr",
    "policy_lr",
    "critic_lr",
    "hidden",
    "init_log_std",
    "d_step_mode",
    "max_grad_norm",
    "seed",
];

/// Fully resolved experiment; serialises to the `run.json` echo.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub env: String,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(flatten)]
    pub penalty: PenaltyConfig,
}

/// Lines of `key = value`; `#` starts a comment, blank lines are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got `{line}`", n + 1)))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

impl ExperimentConfig {
    /// Applies `pairs` (file order, later keys win) on top of the defaults.
    /// The environment supplies the default cost limit and, for tabular
    /// CMDPs, the discount factor.
    pub fn resolve(pairs: &[(String, String)]) -> Result<Self> {
        for (k, _) in pairs {
            if !CONFIG_KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let env = last("env").ok_or_else(|| Error::Config("missing key `env`".into()))?.to_owned();
        let probe = Environment::resolve(&env, 0)?;
        let mut penalty = PenaltyConfig {
            cost_limit: probe.cost_limit(),
            ..PenaltyConfig::default()
        };
        if let Some(spec) = probe.tabular_spec() {
            penalty.gamma = spec.gamma;
        }
        let mut seeds = vec![0];
        let mut out_dir = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
        for (k, v) in pairs {
            let p = &mut penalty;
            match k.as_str() {
                "env" => {}
                "variant" => p.variant = v.parse::<Variant>()?,
                "seeds" => seeds = list(k, v)?,
                "seed" => seeds = vec![num(k, v)?],
                "out_dir" => out_dir = PathBuf::from(v),
                "mu0" => p.mu0 = num(k, v)?,
                "mu_decay" => p.mu_decay = num(k, v)?,
                "clip_eps" => p.clip_eps = num(k, v)?,
                "kl_budget" => p.kl_budget = num(k, v)?,
                "cost_limit" => p.cost_limit = num(k, v)?,
                "gamma" => p.gamma = num(k, v)?,
                "gae_lambda" => p.gae_lambda = num(k, v)?,
                "inner_iters" => p.inner_iters = num(k, v)?,
                "epochs" => p.epochs = num(k, v)?,
                "steps_per_epoch" => p.steps_per_epoch = num(k, v)?,
                "lagrangian_lr" => p.lagrangian_lr = num(k, v)?,
                "policy_lr" => p.policy_lr = num(k, v)?,
                "critic_lr" => p.critic_lr = num(k, v)?,
                "hidden" => p.hidden = list(k, v)?,
                "init_log_std" => p.init_log_std = num(k, v)?,
                "max_grad_norm" => p.max_grad_norm = num(k, v)?,
                "d_step_mode" => {
                    p.d_step_mode = match v.as_str() {
                        "per_step" => DStepMode::PerStep,
                        "discounted" => DStepMode::Discounted,
                        _ => return Err(Error::Config(format!("d_step_mode: unknown mode `{v}`"))),
                    }
                }
                _ => unreachable!("keys checked above"),
            }
        }
        let cfg = Self { env, seeds, out_dir, penalty };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file's text, then applies `overrides` (`key=value`).
    pub fn from_text(text: &str, overrides: &[String]) -> Result<Self> {
        let mut pairs = parse_key_values(text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            pairs.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        Self::resolve(&pairs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("seeds must be distinct, got {:?}", self.seeds)));
        }
        self.penalty.validate()
    }
}
