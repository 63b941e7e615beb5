//! Differentiable losses for one epoch's batch.
//!
//! Tabular observations repeat a lot, so every loss runs the network once
//! per distinct observation and accumulates output gradients per row.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::pmn::{vf_loss, vf_loss_grad, vn_loss};
use crate::policy::{kl_divergence, log_prob_grad, Action, LogProbGrad, Policy};
use crate::rollout::AdvantageBatch;
use crate::tensorcore::{Detached, Forward, Objective, ParamVector};

use super::objective::{
    adaptive_factor, clipped_term, lagrangian_objective, ratio_checked, relu_penalty_objective, relu_penalty_slope,
    smooth_penalty, smooth_penalty_slope,
};
use super::Variant;

/// Distinct observations and, for every sample, the index of its row.
pub fn dedup_observations(observations: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut unique = Vec::new();
    let mut row_of = Vec::with_capacity(observations.len());
    for obs in observations {
        let key: Vec<u64> = obs.iter().map(|x| x.to_bits()).collect();
        let row = *index.entry(key).or_insert_with(|| {
            unique.push(obs.clone());
            unique.len() - 1
        });
        row_of.push(row);
    }
    (unique, row_of)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Surrogates {
    pub l_r: f64,
    pub l_c: f64,
}

/// Everything the policy loss needs from the batch, frozen at `pi_k`.
#[derive(Clone, Debug)]
pub struct PolicyData {
    old_policy: Policy,
    unique_obs: Vec<Vec<f64>>,
    row_of: Vec<usize>,
    actions: Vec<Action>,
    old_log_probs: Vec<f64>,
    adv_r: Vec<f64>,
    adv_c: Vec<f64>,
    /// Value of the sampled cost term at `r = 1`, removed so that
    /// `L_C(pi_k) = jc - d` exactly.
    cost_offset: f64,
    jc: f64,
    d: f64,
    gamma: f64,
    eps: f64,
    old_heads: Vec<Vec<f64>>,
}

struct SampleTerms {
    forwards: Vec<Forward>,
    /// Per sample: `d l_r / d logp`, `d l_c / d logp` and the log-prob gradient.
    per_sample: Vec<(f64, f64, LogProbGrad)>,
    surrogates: Surrogates,
}

impl PolicyData {
    pub fn new(old_policy: &Policy, batch: &AdvantageBatch, d: f64, gamma: f64, eps: f64) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::Usage("empty advantage batch".into()));
        }
        let (unique_obs, row_of) = dedup_observations(&batch.observations);
        let old_heads = unique_obs.iter().map(|o| old_policy.head(o)).collect::<Result<Vec<_>>>()?;
        let n = batch.len() as f64;
        let cost_offset = batch.adv_c.iter().sum::<f64>() / n / (1.0 - gamma);
        Ok(Self {
            old_policy: old_policy.clone(),
            unique_obs,
            row_of,
            actions: batch.actions.clone(),
            old_log_probs: batch.old_log_probs.clone(),
            adv_r: batch.adv_r.clone(),
            adv_c: batch.adv_c.clone(),
            cost_offset,
            jc: batch.jc_estimate,
            d,
            gamma,
            eps,
            old_heads,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.old_policy.n_params()
    }

    pub fn old_policy(&self) -> &Policy {
        &self.old_policy
    }

    fn terms(&self, flat: &[f64], keep_forwards: bool) -> Result<SampleTerms> {
        let policy = self.old_policy.with_flat(flat)?;
        let forwards = self
            .unique_obs
            .iter()
            .map(|o| policy.net().forward(o))
            .collect::<Result<Vec<_>>>()?;
        let n = self.len() as f64;
        let cost_scale = 1.0 / (n * (1.0 - self.gamma));
        let mut sum_r = 0.0;
        let mut sum_c = 0.0;
        let mut per_sample = Vec::with_capacity(if keep_forwards { self.len() } else { 0 });
        for (i, action) in self.actions.iter().enumerate() {
            let head = &forwards[self.row_of[i]].output;
            let lpg = log_prob_grad(head, policy.log_std(), action);
            let (r, clamped) = ratio_checked(lpg.log_prob, self.old_log_probs[i]);
            let (tr, dtr) = clipped_term(r, self.adv_r[i], self.eps);
            let (tc, dtc) = clipped_term(r, self.adv_c[i], self.eps);
            sum_r += tr;
            sum_c += tc;
            if keep_forwards {
                // d r / d logp = r, except on the clamp
                let dr = if clamped { 0.0 } else { r };
                per_sample.push((dr * dtr / n, dr * dtc * cost_scale, lpg));
            }
        }
        let l_r = sum_r / n;
        let l_c = sum_c * cost_scale - self.cost_offset + self.jc - self.d;
        Ok(SampleTerms {
            forwards: if keep_forwards { forwards } else { Vec::new() },
            per_sample,
            surrogates: Surrogates { l_r, l_c },
        })
    }

    pub fn surrogates(&self, flat: &[f64]) -> Result<Surrogates> {
        Ok(self.terms(flat, false)?.surrogates)
    }

    /// Sample-average KL(new || old) over the batch states.
    pub fn mean_kl(&self, flat: &[f64]) -> Result<f64> {
        let policy = self.old_policy.with_flat(flat)?;
        let mut per_row = Vec::with_capacity(self.unique_obs.len());
        for (obs, old_head) in self.unique_obs.iter().zip(&self.old_heads) {
            let head = policy.head(obs)?;
            per_row.push(kl_divergence(
                policy.space(),
                &head,
                policy.log_std(),
                old_head,
                self.old_policy.log_std(),
            ));
        }
        Ok(self.row_of.iter().map(|&r| per_row[r]).sum::<f64>() / self.len() as f64)
    }
}

/// Variant-specific scalars of the policy objective for one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyTerms {
    pub variant: Variant,
    pub mu: f64,
    pub alpha: f64,
    pub lambda_dual: f64,
    pub psi: Detached,
}

impl PenaltyTerms {
    pub fn new(variant: Variant, mu: f64, alpha: f64, lambda_dual: f64) -> Self {
        Self {
            variant,
            mu,
            alpha,
            lambda_dual,
            psi: Detached::new(1.0 / mu),
        }
    }

    /// Recomputes the detached factor at the current constraint surrogate.
    pub fn refresh(&mut self, l_c: f64) {
        self.psi = Detached::new(adaptive_factor(l_c, self.mu));
    }

    /// Objective to maximise.
    pub fn objective(&self, s: Surrogates) -> f64 {
        match self.variant {
            Variant::EpoSmooth | Variant::LinearOnly | Variant::QuadraticOnly => {
                s.l_r - smooth_penalty(s.l_c, self.psi.get(), self.alpha)
            }
            Variant::EpoRelu => relu_penalty_objective(s.l_r, s.l_c, self.mu, self.alpha),
            Variant::PpoLagrangian => lagrangian_objective(s.l_r, s.l_c, self.lambda_dual),
            Variant::PpoUnconstrained => s.l_r,
        }
    }

    /// `d objective / d l_c`.
    pub fn cost_slope(&self, l_c: f64) -> f64 {
        match self.variant {
            Variant::EpoSmooth | Variant::LinearOnly | Variant::QuadraticOnly => {
                -smooth_penalty_slope(l_c, self.psi.get(), self.alpha)
            }
            Variant::EpoRelu => -relu_penalty_slope(l_c, self.mu, self.alpha),
            Variant::PpoLagrangian => -self.lambda_dual,
            Variant::PpoUnconstrained => 0.0,
        }
    }
}

/// Negated policy objective over the flat policy parameters.
pub struct PolicyLoss<'a> {
    pub data: &'a PolicyData,
    pub terms: PenaltyTerms,
}

impl PolicyLoss<'_> {
    pub fn try_value(&self, flat: &[f64]) -> Result<f64> {
        Ok(-self.terms.objective(self.data.surrogates(flat)?))
    }

    pub fn try_value_and_grad(&self, flat: &[f64]) -> Result<(f64, Vec<f64>)> {
        let data = self.data;
        let st = data.terms(flat, true)?;
        let value = -self.terms.objective(st.surrogates);
        let slope = self.terms.cost_slope(st.surrogates.l_c);
        let policy = data.old_policy.with_flat(flat)?;
        let n_net = policy.net().len();
        let mut head_grads = vec![vec![0.0; policy.space().head_dim()]; st.forwards.len()];
        let mut grad = vec![0.0; policy.n_params()];
        for (i, (dr, dc, lpg)) in st.per_sample.iter().enumerate() {
            let d_logp = dr + slope * dc;
            for (g, h) in head_grads[data.row_of[i]].iter_mut().zip(&lpg.d_head) {
                *g -= d_logp * h;
            }
            for (g, h) in grad[n_net..].iter_mut().zip(&lpg.d_log_std) {
                *g -= d_logp * h;
            }
        }
        for (fwd, hg) in st.forwards.iter().zip(&head_grads) {
            policy.net().backward(fwd, hg, &mut grad[..n_net]);
        }
        Ok((value, grad))
    }
}

impl Objective for PolicyLoss<'_> {
    fn value(&self, params: &[f64]) -> f64 {
        self.try_value(params).unwrap_or(f64::NAN)
    }

    fn value_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        self.try_value_and_grad(params)
            .unwrap_or_else(|_| (f64::NAN, vec![f64::NAN; params.len()]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriticKind {
    /// Squared error (reward critic and linear penalty stream).
    Squared,
    /// `t + p - 2 sqrt(t p)` (quadratic penalty stream).
    RootSquared,
}

/// Mean critic regression loss over the flat critic parameters.
pub struct CriticLoss<'a> {
    pub net: &'a ParamVector,
    pub unique_obs: &'a [Vec<f64>],
    pub row_of: &'a [usize],
    pub targets: &'a [f64],
    pub kind: CriticKind,
}

impl CriticLoss<'_> {
    fn sample_loss(&self, pred: f64, target: f64) -> Result<(f64, f64)> {
        Ok(match self.kind {
            CriticKind::Squared => (vn_loss(pred, target), 2.0 * (pred - target)),
            CriticKind::RootSquared => (vf_loss(pred, target)?, vf_loss_grad(pred, target)),
        })
    }

    pub fn try_value(&self, params: &[f64]) -> Result<f64> {
        let net = self.net.with_values(params)?;
        let preds = self
            .unique_obs
            .iter()
            .map(|o| Ok(net.mlp_eval(o)?[0]))
            .collect::<Result<Vec<f64>>>()?;
        let mut total = 0.0;
        for (&row, &t) in self.row_of.iter().zip(self.targets) {
            total += self.sample_loss(preds[row], t)?.0;
        }
        Ok(total / self.targets.len() as f64)
    }

    pub fn try_value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let net = self.net.with_values(params)?;
        let forwards = self.unique_obs.iter().map(|o| net.forward(o)).collect::<Result<Vec<_>>>()?;
        let n = self.targets.len() as f64;
        let mut out_grad = vec![0.0; forwards.len()];
        let mut total = 0.0;
        for (&row, &t) in self.row_of.iter().zip(self.targets) {
            let (l, g) = self.sample_loss(forwards[row].output[0], t)?;
            total += l;
            out_grad[row] += g / n;
        }
        let mut grad = vec![0.0; params.len()];
        for (fwd, g) in forwards.iter().zip(&out_grad) {
            net.backward(fwd, &[*g], &mut grad);
        }
        Ok((total / n, grad))
    }
}

impl Objective for CriticLoss<'_> {
    fn value(&self, params: &[f64]) -> f64 {
        self.try_value(params).unwrap_or(f64::NAN)
    }

    fn value_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        self.try_value_and_grad(params)
            .unwrap_or_else(|_| (f64::NAN, vec![f64::NAN; params.len()]))
    }
}
