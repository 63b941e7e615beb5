//! Exact checks of the per-update constraint and approximation bounds on
//! tabular CMDPs.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::json;

use crate::envs::{advantages_from_eval, exact_policy_eval, Advantages, PolicyEval, TabularCmdpSpec};
use crate::error::{Error, Result};
use crate::pmn::{filter, phi};
use crate::policy::softmax;

use super::BoundReport;

/// Tolerance on the surrogate-constraint precondition.
const PRECONDITION_TOL: f64 = 1e-12;

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a == 0.0 {
                0.0
            } else if b == 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum::<f64>()
        .max(0.0)
}

/// `sum_s d_k(s) KL(pi(.|s) || pi_k(.|s))` under the old policy's visitation.
pub fn trust_region_kl(eval_k: &PolicyEval, pi_k: &[Vec<f64>], pi: &[Vec<f64>]) -> f64 {
    eval_k.visitation.iter().zip(pi.iter().zip(pi_k)).map(|(&w, (p, q))| w * kl(p, q)).sum()
}

/// `max_s |sum_a pi(a|s) A(s, a)|`.
pub fn advantage_eps(pi: &[Vec<f64>], adv: &[Vec<f64>]) -> f64 {
    pi.iter()
        .zip(adv)
        .map(|(p, a)| p.iter().zip(a).map(|(x, y)| x * y).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

fn expected_advantage(eval_k: &PolicyEval, pi: &[Vec<f64>], adv: &[Vec<f64>]) -> f64 {
    eval_k
        .visitation
        .iter()
        .zip(pi.iter().zip(adv))
        .map(|(&w, (p, a))| w * p.iter().zip(a).map(|(x, y)| x * y).sum::<f64>())
        .sum()
}

/// `J_R(pi_k) + E_{s ~ d_k, a ~ pi}[A_R^k] / (1 - gamma)`.
pub fn surrogate_reward(spec: &TabularCmdpSpec, eval_k: &PolicyEval, adv_k: &Advantages, pi: &[Vec<f64>]) -> f64 {
    eval_k.j_r + expected_advantage(eval_k, pi, &adv_k.a_r) / (1.0 - spec.gamma)
}

/// `J_C(pi_k) - d + E_{s ~ d_k, a ~ pi}[A_C^k] / (1 - gamma)`.
pub fn surrogate_cost(spec: &TabularCmdpSpec, eval_k: &PolicyEval, adv_k: &Advantages, pi: &[Vec<f64>]) -> f64 {
    eval_k.j_c - spec.cost_limit + expected_advantage(eval_k, pi, &adv_k.a_c) / (1.0 - spec.gamma)
}

/// Surrogate penalty function built from the two surrogates.
pub fn surrogate_penalty(
    spec: &TabularCmdpSpec,
    eval_k: &PolicyEval,
    adv_k: &Advantages,
    pi: &[Vec<f64>],
    mu: f64,
    alpha: f64,
) -> f64 {
    let l_c = surrogate_cost(spec, eval_k, adv_k, pi);
    surrogate_reward(spec, eval_k, adv_k, pi) - phi(filter(l_c), alpha).expect("filtered") / mu
}

pub fn prop1_rhs(d: f64, delta: f64, gamma: f64, eps_c: f64) -> f64 {
    d + (2.0 * delta).sqrt() * gamma * eps_c / (1.0 - gamma).powi(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThmTerms {
    pub reward_term: f64,
    /// Everything multiplied by `1/mu`.
    pub penalty_term: f64,
    pub total: f64,
}

pub fn thm2_rhs(delta: f64, gamma: f64, eps_r: f64, eps_c: f64, mu: f64, alpha: f64) -> ThmTerms {
    let root = (2.0 * delta).sqrt();
    let reward_term = root * gamma * eps_r / (1.0 - gamma);
    let linear = root * alpha * gamma * eps_c / (1.0 - gamma).powi(2);
    let quad = (2.0 * delta * (1.0 - alpha)).sqrt() * gamma * eps_c / (1.0 - gamma).powi(2);
    let penalty_term = (linear + quad * quad) / mu;
    ThmTerms { reward_term, penalty_term, total: reward_term + penalty_term }
}

struct Prepared {
    eval_k: PolicyEval,
    adv_k: Advantages,
    kl: f64,
    l_c: f64,
}

fn prepare(spec: &TabularCmdpSpec, pi_k: &[Vec<f64>], pi: &[Vec<f64>], delta: f64) -> Result<Prepared> {
    let eval_k = exact_policy_eval(spec, pi_k)?;
    spec.check_policy(pi)?;
    let adv_k = advantages_from_eval(spec, &eval_k);
    let kl = trust_region_kl(&eval_k, pi_k, pi);
    let l_c = surrogate_cost(spec, &eval_k, &adv_k, pi);
    let mut failed = Vec::new();
    if !(kl <= delta) {
        failed.push(format!("visitation-weighted KL {kl:.6e} exceeds delta {delta}"));
    }
    if l_c > PRECONDITION_TOL {
        failed.push(format!("surrogate constraint {l_c:.6e} is positive"));
    }
    if !failed.is_empty() {
        return Err(Error::Usage(format!("bound preconditions failed: {}", failed.join("; "))));
    }
    Ok(Prepared { eval_k, adv_k, kl, l_c })
}

/// `J_C(pi) <= d + sqrt(2 delta) gamma eps_C / (1 - gamma)^2` for an update
/// inside the trust region that satisfies the surrogate constraint.
pub fn verify_prop1(spec: &TabularCmdpSpec, pi_k: &[Vec<f64>], pi: &[Vec<f64>], delta: f64) -> Result<BoundReport> {
    let prep = prepare(spec, pi_k, pi, delta)?;
    let eps_c = advantage_eps(pi, &prep.adv_k.a_c);
    let lhs = exact_policy_eval(spec, pi)?.j_c;
    let rhs = prop1_rhs(spec.cost_limit, delta, spec.gamma, eps_c);
    Ok(BoundReport::new(
        "prop1",
        lhs,
        rhs,
        json!({"delta": delta, "kl": prep.kl, "l_c": prep.l_c, "eps_c": eps_c, "d": spec.cost_limit, "gamma": spec.gamma}),
    ))
}

/// `|P(pi) - P_k(pi)|` against its bound, all quantities exact.
pub fn verify_thm2(
    spec: &TabularCmdpSpec,
    pi_k: &[Vec<f64>],
    pi: &[Vec<f64>],
    mu: f64,
    alpha: f64,
    delta: f64,
) -> Result<BoundReport> {
    if !(mu > 0.0) || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Usage(format!("need mu > 0 and alpha in [0, 1], got {mu}, {alpha}")));
    }
    let prep = prepare(spec, pi_k, pi, delta)?;
    let eval = exact_policy_eval(spec, pi)?;
    let true_penalty = eval.j_r - phi(filter(eval.j_c - spec.cost_limit), alpha)? / mu;
    let surrogate = surrogate_penalty(spec, &prep.eval_k, &prep.adv_k, pi, mu, alpha);
    let eps_r = advantage_eps(pi, &prep.adv_k.a_r);
    let eps_c = advantage_eps(pi, &prep.adv_k.a_c);
    let terms = thm2_rhs(delta, spec.gamma, eps_r, eps_c, mu, alpha);
    Ok(BoundReport::new(
        "thm2",
        (true_penalty - surrogate).abs(),
        terms.total,
        json!({
            "delta": delta, "mu": mu, "alpha": alpha, "kl": prep.kl, "l_c": prep.l_c,
            "eps_r": eps_r, "eps_c": eps_c, "reward_term": terms.reward_term,
            "penalty_term": terms.penalty_term, "true_penalty": true_penalty, "surrogate": surrogate,
        }),
    ))
}

/// Draws random policies and small logit perturbations of them until a pair
/// meets the trust-region and surrogate-constraint preconditions.
#[derive(Clone, Copy, Debug)]
pub struct PairSampler {
    pub delta: f64,
    /// Std of the logits of the old policy.
    pub logit_scale: f64,
    /// Upper end of the uniform perturbation std.
    pub max_step: f64,
    pub max_attempts: usize,
}

impl PairSampler {
    pub fn new(delta: f64) -> Self {
        Self { delta, logit_scale: 1.5, max_step: 0.6, max_attempts: 100_000 }
    }

    pub fn sample<R: Rng + ?Sized>(&self, spec: &TabularCmdpSpec, rng: &mut R) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let base = Normal::new(0.0, self.logit_scale).map_err(|e| Error::Usage(e.to_string()))?;
        for _ in 0..self.max_attempts {
            let logits: Vec<Vec<f64>> =
                (0..spec.n_states).map(|_| (0..spec.n_actions).map(|_| base.sample(rng)).collect()).collect();
            let step = Normal::new(0.0, rng.gen_range(0.0..self.max_step)).map_err(|e| Error::Usage(e.to_string()))?;
            let moved: Vec<Vec<f64>> = logits.iter().map(|l| l.iter().map(|x| x + step.sample(rng)).collect()).collect();
            let pi_k: Vec<Vec<f64>> = logits.iter().map(|l| softmax(l)).collect();
            let pi: Vec<Vec<f64>> = moved.iter().map(|l| softmax(l)).collect();
            if prepare(spec, &pi_k, &pi, self.delta).is_ok() {
                return Ok((pi_k, pi));
            }
        }
        Err(Error::Internal(format!("no admissible policy pair in {} attempts", self.max_attempts)))
    }
}
