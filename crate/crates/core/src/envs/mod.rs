//! Constrained environments behind one stepping interface.

mod continuous;
mod tabular;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use continuous::{
    continuous_reset, continuous_step, ContinuousEnvConfig, ContinuousKind, ContinuousState, GOAL_BONUS,
    VELOCITY_DAMPING,
};
pub use tabular::{
    advantages_from_eval, exact_advantages, exact_policy_eval, tabular_step, Advantages, PolicyEval,
    TabularCmdpSpec, TabularEnv,
};

use crate::error::{Error, Result};
use crate::policy::{Action, ActionSpace};

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_observation: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    /// The episode is over (goal reached or time limit).
    pub done: bool,
    /// The episode was cut by the time limit; its value should be bootstrapped.
    pub truncated: bool,
}

pub const CHAIN3_JSON: &str = include_str!("../../presets/chain3.json");
pub const GRIDLOCK2_JSON: &str = include_str!("../../presets/gridlock2.json");
pub const HAZARDWORLD_JSON: &str = include_str!("../../presets/hazardworld.json");

pub const TABULAR_PRESETS: [&str; 3] = ["chain3", "gridlock2", "hazardworld"];
pub const CONTINUOUS_PRESETS: [&str; 2] = ["point_hazard", "velocity_1d"];

/// Hazard count of the point navigation preset.
pub const POINT_HAZARDS: usize = 3;

pub fn tabular_preset(name: &str) -> Result<TabularCmdpSpec> {
    let text = match name.trim_end_matches(".json") {
        "chain3" => CHAIN3_JSON,
        "gridlock2" => GRIDLOCK2_JSON,
        "hazardworld" => HAZARDWORLD_JSON,
        other => return Err(Error::Config(format!("unknown tabular preset `{other}`"))),
    };
    TabularCmdpSpec::from_json(text)
}

#[derive(Clone, Debug)]
pub enum Environment {
    Tabular(TabularEnv),
    Continuous {
        config: ContinuousEnvConfig,
        state: ContinuousState,
    },
}

impl Environment {
    /// Resolves a preset name or a path to a tabular JSON file. `seed` fixes
    /// the hazard layout of the point task.
    pub fn resolve(name: &str, seed: u64) -> Result<Self> {
        let stem = name.trim_end_matches(".json");
        if TABULAR_PRESETS.contains(&stem) {
            return Self::tabular(tabular_preset(stem)?);
        }
        match stem {
            "velocity_1d" => Ok(Self::continuous(ContinuousEnvConfig::velocity_1d())),
            "point_hazard" => {
                let mut layout = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a70);
                Ok(Self::continuous(ContinuousEnvConfig::point_hazard(POINT_HAZARDS, &mut layout)?))
            }
            _ => {
                let path = Path::new(name);
                if path.is_file() {
                    let text = std::fs::read_to_string(path)?;
                    Self::tabular(TabularCmdpSpec::from_json(&text)?)
                } else {
                    Err(Error::Config(format!("`{name}` is neither a preset nor a spec file")))
                }
            }
        }
    }

    pub fn tabular(spec: TabularCmdpSpec) -> Result<Self> {
        Ok(Environment::Tabular(TabularEnv::new(spec)?))
    }

    pub fn continuous(config: ContinuousEnvConfig) -> Self {
        Environment::Continuous {
            config,
            state: ContinuousState::default(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Environment::Tabular(env) => env.spec().n_states,
            Environment::Continuous { config, .. } => config.obs_dim(),
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match self {
            Environment::Tabular(env) => ActionSpace::Discrete(env.spec().n_actions),
            Environment::Continuous { config, .. } => ActionSpace::Continuous {
                dim: config.action_dim(),
                max_force: config.max_force,
            },
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Environment::Tabular(env) => env.spec().horizon,
            Environment::Continuous { config, .. } => config.horizon,
        }
    }

    pub fn cost_limit(&self) -> f64 {
        match self {
            Environment::Tabular(env) => env.spec().cost_limit,
            Environment::Continuous { config, .. } => config.cost_limit,
        }
    }

    pub fn set_cost_limit(&mut self, d: f64) {
        match self {
            Environment::Tabular(env) => {
                let mut spec = env.spec().clone();
                spec.cost_limit = d;
                *env = TabularEnv::new(spec).expect("cost limit does not affect validity");
            }
            Environment::Continuous { config, .. } => config.cost_limit = d,
        }
    }

    pub fn tabular_spec(&self) -> Option<&TabularCmdpSpec> {
        match self {
            Environment::Tabular(env) => Some(env.spec()),
            Environment::Continuous { .. } => None,
        }
    }

    /// Tabular tasks budget the discounted cost (their theory and oracles are
    /// discounted); continuous tasks budget the plain episodic sum.
    pub fn discounted_constraint(&self) -> bool {
        matches!(self, Environment::Tabular(_))
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Environment::Tabular(env) => Ok(env.reset(rng)),
            Environment::Continuous { config, state } => {
                let (s, obs) = continuous_reset(config, rng)?;
                *state = s;
                Ok(obs)
            }
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: &Action, rng: &mut R) -> Result<StepResult> {
        match (self, action) {
            (Environment::Tabular(env), Action::Discrete(a)) => env.step(*a, rng),
            (Environment::Continuous { config, state }, Action::Continuous(a)) => {
                continuous_step(config, state, a)
            }
            _ => Err(Error::Usage("action kind does not match the environment".into())),
        }
    }
}
