//! One epoch of inner iterations: critics, then the policy, then the KL check.

use serde::Serialize;

use crate::critics::Critics;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rollout::AdvantageBatch;
use crate::tensorcore::{value_and_grad, OptimizerState, ParamVector};

use super::loss::{dedup_observations, CriticKind, CriticLoss, PenaltyTerms, PolicyData, PolicyLoss};
use super::PenaltyConfig;

/// Policy, critics and their optimiser states.
#[derive(Clone, Debug)]
pub struct Learner {
    pub policy: Policy,
    pub critics: Critics,
    pub policy_opt: OptimizerState,
    pub vr_opt: OptimizerState,
    pub vn_opt: OptimizerState,
    pub vf_opt: OptimizerState,
}

impl Learner {
    pub fn new(policy: Policy, critics: Critics, policy_lr: f64, critic_lr: f64) -> Self {
        Self {
            policy_opt: OptimizerState::new(policy.n_params(), policy_lr),
            vr_opt: OptimizerState::new(critics.vr.len(), critic_lr),
            vn_opt: OptimizerState::new(critics.vn.len(), critic_lr),
            vf_opt: OptimizerState::new(critics.vf.len(), critic_lr),
            policy,
            critics,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UpdateReport {
    pub loss_pi: f64,
    pub loss_vr: f64,
    pub loss_vn: f64,
    pub loss_vf: f64,
    /// KL at the last check; above the budget when `stopped_early`.
    pub mean_kl: f64,
    pub stopped_early: bool,
    pub mu_used: f64,
    pub alpha_used: f64,
    pub l_r: f64,
    pub l_c: f64,
    /// Inner iterations whose policy step was kept.
    pub iterations: usize,
}

fn dump_and_wrap(err: Error, batch: &AdvantageBatch, iteration: usize) -> Error {
    match err {
        Error::Numeric { context, value } => {
            log::error!(
                "non-finite loss at inner iteration {iteration}; batch of {} samples, jc {}, adv_r range [{}, {}], adv_c range [{}, {}], first observation {:?}",
                batch.len(),
                batch.jc_estimate,
                batch.adv_r.iter().cloned().fold(f64::INFINITY, f64::min),
                batch.adv_r.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                batch.adv_c.iter().cloned().fold(f64::INFINITY, f64::min),
                batch.adv_c.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                batch.observations.first()
            );
            Error::Numeric {
                context: format!("inner iteration {iteration}: {context}"),
                value,
            }
        }
        other => other,
    }
}

/// Runs up to `inner_iters` full-batch iterations. A policy step that pushes
/// the sample KL past the budget is undone and ends the epoch.
pub fn epoch_update(
    learner: &mut Learner,
    batch: &AdvantageBatch,
    mut terms: PenaltyTerms,
    config: &PenaltyConfig,
) -> Result<UpdateReport> {
    let data = PolicyData::new(&learner.policy, batch, config.cost_limit, config.gamma, config.clip_eps)?;
    let (unique, rows) = dedup_observations(&batch.observations);
    let mut flat = learner.policy.flat();
    let mut report = UpdateReport {
        loss_pi: 0.0,
        loss_vr: 0.0,
        loss_vn: 0.0,
        loss_vf: 0.0,
        mean_kl: 0.0,
        stopped_early: false,
        mu_used: terms.mu,
        alpha_used: terms.alpha,
        l_r: 0.0,
        l_c: 0.0,
        iterations: 0,
    };
    for it in 0..config.inner_iters {
        let wrap = |e| dump_and_wrap(e, batch, it);
        let critics = &mut learner.critics;
        report.loss_vr = critic_step(&mut critics.vr, &mut learner.vr_opt, &unique, &rows, &batch.returns_r, CriticKind::Squared)
            .map_err(wrap)?;
        report.loss_vn = critic_step(&mut critics.vn, &mut learner.vn_opt, &unique, &rows, &batch.vn_targets, CriticKind::Squared)
            .map_err(wrap)?;
        report.loss_vf = critic_step(&mut critics.vf, &mut learner.vf_opt, &unique, &rows, &batch.vf_targets, CriticKind::RootSquared)
            .map_err(wrap)?;

        terms.refresh(data.surrogates(&flat).map_err(wrap)?.l_c);
        let loss = PolicyLoss { data: &data, terms };
        let (loss_pi, mut grad) = value_and_grad(&loss, &flat).map_err(wrap)?;
        clip_grad_norm(&mut grad, config.max_grad_norm);
        report.loss_pi = loss_pi;
        let saved = (flat.clone(), learner.policy_opt.clone());
        learner.policy_opt.step(&mut flat, &grad).map_err(wrap)?;
        report.mean_kl = data.mean_kl(&flat).map_err(wrap)?;
        if report.mean_kl > config.kl_budget {
            (flat, learner.policy_opt) = saved;
            report.stopped_early = true;
            break;
        }
        report.iterations += 1;
    }
    learner.policy.set_flat(&flat)?;
    let s = data.surrogates(&flat)?;
    report.l_r = s.l_r;
    report.l_c = s.l_c;
    Ok(report)
}

/// Rescales `grad` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
}

fn critic_step(
    net: &mut ParamVector,
    opt: &mut OptimizerState,
    unique: &[Vec<f64>],
    rows: &[usize],
    targets: &[f64],
    kind: CriticKind,
) -> Result<f64> {
    let (loss, grad) = {
        let obj = CriticLoss { net, unique_obs: unique, row_of: rows, targets, kind };
        value_and_grad(&obj, net.values())?
    };
    opt.step(net.values_mut(), &grad)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_norm_cap() {
        let mut g = vec![3.0, 4.0];
        clip_grad_norm(&mut g, 1.0);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
        let mut small = vec![0.1, -0.2];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.1, -0.2]);
        let mut off = vec![30.0, 40.0];
        clip_grad_norm(&mut off, 0.0);
        assert_eq!(off, vec![30.0, 40.0]);
    }
}
