//! Verification oracles that never touch learned components: grid search
//! on closed-form penalty problems, brute force over small tabular policy
//! spaces, and exact evaluation of the per-update bounds.

mod analytic;
mod bounds;
mod cmdp;

use serde::Serialize;
use serde_json::Value;

pub use analytic::{
    grid_global_max, shipped_problems, verify_corollary1, verify_lemma1, AnalyticProblem, GridMax,
    MIN_RESOLUTION,
};
pub use bounds::{
    advantage_eps, prop1_rhs, surrogate_cost, surrogate_penalty, surrogate_reward, thm2_rhs, trust_region_kl,
    verify_prop1, verify_thm2, PairSampler, ThmTerms,
};
pub use cmdp::{brute_force_cmdp, for_each_policy, state_choices, BruteForceResult, MAX_FREE_PARAMS};

/// Slack allowed by every `lhs <= rhs` comparison.
pub const BOUND_TOL: f64 = 1e-9;

/// Outcome of one `lhs <= rhs` check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub slack: f64,
    pub inputs: Value,
}

impl BoundReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, inputs: Value) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            satisfied: lhs <= rhs + BOUND_TOL,
            slack: rhs - lhs,
            inputs,
        }
    }
}
