//! The outer loop: collect, estimate, update, then move the schedules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::critics::Critics;
use crate::envs::{exact_policy_eval, Environment, PolicyEval, TabularCmdpSpec};
use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::pmn::{PmnState, Region};
use crate::policy::Policy;
use crate::rollout::{build_batch, collect, per_step_limit, BatchConfig};

use super::loss::PenaltyTerms;
use super::objective::{dual_update, mu_schedule};
use super::update::{epoch_update, Learner};
use super::{PenaltyConfig, Variant};

/// Extra per-epoch quantities that are not part of the CSV schema.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochDiagnostics {
    pub epoch: usize,
    /// Constraint estimate minus limit for the data-collecting policy.
    pub f_c: f64,
    pub f_norm: f64,
    pub region: Region,
    pub lambda_dual: f64,
    pub l_r: f64,
    pub l_c: f64,
    pub stopped_early: bool,
    pub iterations: usize,
    /// Exact discounted values of the data-collecting policy (tabular only).
    pub exact_jr: Option<f64>,
    pub exact_jc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRow>,
    pub diagnostics: Vec<EpochDiagnostics>,
    pub policy: Policy,
    pub critics: Critics,
}

/// Exact evaluation of a policy on a tabular CMDP with one-hot observations.
pub fn exact_tabular_eval(spec: &TabularCmdpSpec, policy: &Policy) -> Result<PolicyEval> {
    let table = (0..spec.n_states)
        .map(|s| policy.action_probs(&spec.one_hot(s)))
        .collect::<Result<Vec<_>>>()?;
    exact_policy_eval(spec, &table)
}

/// Deterministic given `seed`.
pub fn train(env: &mut Environment, config: &PenaltyConfig, seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    if let Some(spec) = env.tabular_spec() {
        if spec.gamma != config.gamma {
            log::warn!("training gamma {} differs from the CMDP's {}", config.gamma, spec.gamma);
        }
    }
    env.set_cost_limit(config.cost_limit);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = Policy::new(env.obs_dim(), env.action_space(), &config.hidden, config.init_log_std, &mut rng)?;
    let critics = Critics::new(env.obs_dim(), &config.hidden, &mut rng)?;
    let mut learner = Learner::new(policy, critics, config.policy_lr, config.critic_lr);

    let d = config.cost_limit;
    let batch_cfg = BatchConfig {
        gamma: config.gamma,
        lambda: config.gae_lambda,
        d_step: per_step_limit(d, config.gamma, env.horizon(), config.d_step_mode),
        discounted_constraint: env.discounted_constraint(),
    };
    let mut pmn = PmnState::default();
    let mut mu = config.mu0;
    let mut lambda_dual = 0.0;
    let mut violations = 0;
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut diagnostics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let in_epoch = |e: Error| match e {
            Error::Numeric { context, value } => Error::Numeric {
                context: format!("epoch {epoch}: {context}"),
                value,
            },
            other => other,
        };
        let trajectories = collect(&learner.policy, &learner.critics, env, config.steps_per_epoch, &mut rng)
            .map_err(in_epoch)?;
        let batch = build_batch(&trajectories, &learner.critics, &batch_cfg).map_err(in_epoch)?;
        let exact = match env.tabular_spec() {
            Some(spec) => Some(exact_tabular_eval(spec, &learner.policy)?),
            None => None,
        };

        let f_c = batch.jc_estimate - d;
        let f_norm = pmn.normalize(f_c);
        let region = pmn.classify_region(f_norm);
        let alpha = match config.variant.pinned_alpha() {
            Some(a) => a,
            None => pmn.select_alpha(region),
        };
        let terms = PenaltyTerms::new(config.variant, mu, alpha, lambda_dual);
        let report = epoch_update(&mut learner, &batch, terms, config).map_err(in_epoch)?;

        if batch.jc_estimate > d {
            violations += 1;
        }
        metrics.push(MetricsRow {
            epoch,
            env_steps: (epoch + 1) * config.steps_per_epoch,
            mean_return: batch.mean_return,
            mean_episodic_cost: batch.mean_episodic_cost,
            discounted_jc: exact.as_ref().map_or(batch.mean_discounted_cost, |e| e.j_c),
            cost_limit: d,
            mu,
            alpha,
            mean_kl: report.mean_kl,
            loss_pi: report.loss_pi,
            loss_vr: report.loss_vr,
            loss_vn: report.loss_vn,
            loss_vf: report.loss_vf,
            cumulative_violations: violations,
        });
        diagnostics.push(EpochDiagnostics {
            epoch,
            f_c,
            f_norm,
            region,
            lambda_dual,
            l_r: report.l_r,
            l_c: report.l_c,
            stopped_early: report.stopped_early,
            iterations: report.iterations,
            exact_jr: exact.as_ref().map(|e| e.j_r),
            exact_jc: exact.as_ref().map(|e| e.j_c),
        });
        log::debug!(
            "epoch {epoch}: return {:.3} cost {:.3} jc {:.4} alpha {alpha} mu {mu:.4} kl {:.4} iters {}",
            batch.mean_return,
            batch.mean_episodic_cost,
            batch.jc_estimate,
            report.mean_kl,
            report.iterations
        );

        mu = mu_schedule(mu, config.mu_decay);
        if config.variant == Variant::PpoLagrangian {
            lambda_dual = dual_update(lambda_dual, config.lagrangian_lr, batch.jc_estimate, d);
        }
    }
    Ok(TrainOutcome {
        metrics,
        diagnostics,
        policy: learner.policy,
        critics: learner.critics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(variant: Variant) -> PenaltyConfig {
        PenaltyConfig {
            epochs: 3,
            steps_per_epoch: 200,
            hidden: vec![8],
            inner_iters: 5,
            gamma: 0.9,
            cost_limit: 3.0,
            variant,
            ..PenaltyConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_policy() {
        let mut env = Environment::resolve("chain3", 0).unwrap();
        let cfg = PenaltyConfig { epochs: 0, ..small(Variant::EpoSmooth) };
        let out = train(&mut env, &cfg, 4).unwrap();
        assert!(out.metrics.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fresh = Policy::new(env.obs_dim(), env.action_space(), &cfg.hidden, cfg.init_log_std, &mut rng).unwrap();
        assert_eq!(out.policy, fresh);
    }

    #[test]
    fn same_seed_same_metrics() {
        for variant in [Variant::EpoSmooth, Variant::PpoLagrangian] {
            let run = || train(&mut Environment::resolve("chain3", 9).unwrap(), &small(variant), 9).unwrap();
            let (a, b) = (run(), run());
            assert_eq!(a.metrics, b.metrics);
            assert_eq!(a.policy, b.policy);
        }
    }

    #[test]
    fn schedules_and_counters_move() {
        let mut env = Environment::resolve("chain3", 1).unwrap();
        let cfg = PenaltyConfig { mu_decay: 0.5, ..small(Variant::QuadraticOnly) };
        let out = train(&mut env, &cfg, 1).unwrap();
        let mus: Vec<f64> = out.metrics.iter().map(|m| m.mu).collect();
        assert_eq!(mus, vec![1.0, 0.5, 0.25]);
        assert!(out.metrics.iter().all(|m| m.alpha == 0.0));
        assert!(out.metrics.windows(2).all(|w| w[0].cumulative_violations <= w[1].cumulative_violations));
        assert!(out.diagnostics.iter().all(|d| d.exact_jc.is_some()));
    }
}
