//! Constrained reinforcement learning with an exterior penalty objective.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensorcore`]: small multilayer perceptrons with hand-written reverse-mode
//!   gradients, Adam, and a central finite-difference checker.
//! - [`policy`]: categorical and Gaussian policy heads on top of an MLP.
//! - [`envs`]: an exactly solvable tabular CMDP plus two continuous tasks.
//! - [`rollout`]: trajectory collection, GAE, cost returns and penalty-critic targets.
//! - [`pmn`]: the penalty metric (filter, region weighting, critic losses).
//! - [`epo`]: clipped surrogates, smooth/ReLU penalties, the update loop and training.
//! - [`oracle`]: grid and brute-force solvers plus exact bound checks.
//! - [`harness`]: configuration files, CSV metrics, verification suites and the CLI glue.

pub mod critics;
pub mod envs;
pub mod epo;
mod error;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod pmn;
pub mod policy;
pub mod rollout;
pub mod tensorcore;

pub use error::{Error, Result};
