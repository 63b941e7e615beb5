//! Penalty-based policy optimisation: objective pieces, losses, the inner
//! update loop and the outer training loop.

mod loss;
mod objective;
mod train;
mod update;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rollout::DStepMode;

pub use loss::{dedup_observations, CriticKind, CriticLoss, PenaltyTerms, PolicyData, PolicyLoss, Surrogates};
pub use objective::{
    adaptive_factor, clip_surrogate_cost, clip_surrogate_reward, clipped_term, dual_update, lagrangian_objective,
    mu_schedule, ratio, ratio_checked, relu_penalty_objective, relu_penalty_slope, smooth_penalty,
    smooth_penalty_objective, smooth_penalty_slope, MU_FLOOR, PSI_EXPONENT_CAP, RATIO_CEILING,
};
pub use train::{exact_tabular_eval, train, EpochDiagnostics, TrainOutcome};
pub use update::{clip_grad_norm, epoch_update, Learner, UpdateReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    EpoSmooth,
    EpoRelu,
    /// Smooth penalty with the weight pinned to the linear stream.
    LinearOnly,
    /// Smooth penalty with the weight pinned to the quadratic stream.
    QuadraticOnly,
    PpoLagrangian,
    PpoUnconstrained,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::EpoSmooth,
        Variant::EpoRelu,
        Variant::LinearOnly,
        Variant::QuadraticOnly,
        Variant::PpoLagrangian,
        Variant::PpoUnconstrained,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::EpoSmooth => "epo_smooth",
            Variant::EpoRelu => "epo_relu",
            Variant::LinearOnly => "linear_only",
            Variant::QuadraticOnly => "quadratic_only",
            Variant::PpoLagrangian => "ppo_lagrangian",
            Variant::PpoUnconstrained => "ppo_unconstrained",
        }
    }

    /// Weight override for the ablations; `None` means region-scheduled.
    pub fn pinned_alpha(self) -> Option<f64> {
        match self {
            Variant::LinearOnly => Some(1.0),
            Variant::QuadraticOnly => Some(0.0),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub mu0: f64,
    pub mu_decay: f64,
    pub clip_eps: f64,
    pub kl_budget: f64,
    pub cost_limit: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub inner_iters: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub variant: Variant,
    pub lagrangian_lr: f64,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub d_step_mode: DStepMode,
    /// Global norm cap on each policy gradient; 0 disables it.
    pub max_grad_norm: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            mu_decay: 0.999,
            clip_eps: 0.2,
            kl_budget: 0.02,
            cost_limit: 25.0,
            gamma: 0.99,
            gae_lambda: 0.95,
            inner_iters: 40,
            epochs: 100,
            steps_per_epoch: 4000,
            variant: Variant::EpoSmooth,
            lagrangian_lr: 0.05,
            policy_lr: 3e-4,
            critic_lr: 1e-3,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            d_step_mode: DStepMode::PerStep,
            max_grad_norm: 0.5,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.mu0 > 0.0) {
            return bad(format!("mu0 must be positive, got {}", self.mu0));
        }
        if !(self.mu_decay > 0.0 && self.mu_decay <= 1.0) {
            return bad(format!("mu_decay must lie in (0, 1], got {}", self.mu_decay));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad(format!("clip_eps must lie in (0, 1), got {}", self.clip_eps));
        }
        if !(self.kl_budget >= 0.0) {
            return bad(format!("kl_budget must be nonnegative, got {}", self.kl_budget));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if self.inner_iters == 0 {
            return bad("inner_iters must be at least 1".into());
        }
        if self.steps_per_epoch == 0 {
            return bad("steps_per_epoch must be positive".into());
        }
        if !(self.lagrangian_lr > 0.0) {
            return bad(format!("lagrangian_lr must be positive, got {}", self.lagrangian_lr));
        }
        if !(self.policy_lr >= 0.0 && self.critic_lr >= 0.0) {
            return bad("learning rates must be nonnegative".into());
        }
        if !(self.max_grad_norm >= 0.0) {
            return bad(format!("max_grad_norm must be nonnegative, got {}", self.max_grad_norm));
        }
        if !self.cost_limit.is_finite() || !self.init_log_std.is_finite() {
            return bad("cost_limit and init_log_std must be finite".into());
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer widths must be positive".into());
        }
        Ok(())
    }
}
