//! Trajectory collection and the per-epoch advantage batch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::critics::Critics;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::policy::{Action, Policy};

/// One contiguous piece of an episode. A trajectory is either a whole
/// episode (`complete`) or the unfinished tail cut off by the step budget.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub dones: Vec<bool>,
    pub truncateds: Vec<bool>,
    pub complete: bool,
    /// `(V_R, V_N)` of the observation after the last step; zero when the
    /// episode terminated rather than being cut.
    pub bootstrap_values: (f64, f64),
}

impl Trajectory {
    fn empty() -> Self {
        Self {
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            costs: Vec::new(),
            log_probs: Vec::new(),
            dones: Vec::new(),
            truncateds: Vec::new(),
            complete: false,
            bootstrap_values: (0.0, 0.0),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn terminated(&self) -> bool {
        matches!((self.dones.last(), self.truncateds.last()), (Some(true), Some(false)))
    }
}

/// Runs the policy for exactly `steps_per_epoch` environment steps, starting
/// from a fresh episode.
pub fn collect<R: Rng + ?Sized>(
    policy: &Policy,
    critics: &Critics,
    env: &mut Environment,
    steps_per_epoch: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    if steps_per_epoch < env.horizon() {
        return Err(Error::Usage(format!(
            "steps_per_epoch {steps_per_epoch} is shorter than one horizon ({})",
            env.horizon()
        )));
    }
    let mut out = Vec::new();
    let mut current = Trajectory::empty();
    let mut obs = env.reset(rng)?;
    for step in 0..steps_per_epoch {
        let (action, logp) = policy
            .sample(&obs, rng)
            .map_err(|e| with_context(e, &format!("sampling step {step}")))?;
        let res = env.step(&action, rng)?;
        current.observations.push(std::mem::replace(&mut obs, res.next_observation));
        current.actions.push(action);
        current.rewards.push(res.reward);
        current.costs.push(res.cost);
        current.log_probs.push(logp);
        current.dones.push(res.done);
        current.truncateds.push(res.truncated);
        if res.done {
            current.complete = true;
            current.bootstrap_values = if current.terminated() {
                (0.0, 0.0)
            } else {
                critics.values(&obs)?
            };
            out.push(std::mem::replace(&mut current, Trajectory::empty()));
            if step + 1 < steps_per_epoch {
                obs = env.reset(rng)?;
            }
        }
    }
    if !current.is_empty() {
        current.bootstrap_values = critics.values(&obs)?;
        out.push(current);
    }
    Ok(out)
}

fn with_context(err: Error, context: &str) -> Error {
    match err {
        Error::Numeric { context: inner, value } => Error::Numeric {
            context: format!("{context}: {inner}"),
            value,
        },
        other => other,
    }
}

/// Generalised advantage estimation over one trajectory segment.
pub fn gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() {
        return Err(Error::Usage(format!(
            "gae: {} rewards vs {} values",
            rewards.len(),
            values.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Regression targets of the linear and quadratic cost critics:
/// `max(C_t + gamma * V_N(s_{t+1}) - d_step, 0)` and its square.
pub fn pmn_targets(
    costs: &[f64],
    vn_values: &[f64],
    vn_bootstrap: f64,
    gamma: f64,
    d_step: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if costs.len() != vn_values.len() {
        return Err(Error::Usage(format!(
            "pmn_targets: {} costs vs {} values",
            costs.len(),
            vn_values.len()
        )));
    }
    let n = costs.len();
    let vn: Vec<f64> = (0..n)
        .map(|t| {
            let next = if t + 1 < n { vn_values[t + 1] } else { vn_bootstrap };
            (costs[t] + gamma * next - d_step).max(0.0)
        })
        .collect();
    let vf = vn.iter().map(|v| v * v).collect();
    Ok((vn, vf))
}

/// Undiscounted cost of every complete episode, and their mean.
pub fn episodic_costs(trajectories: &[Trajectory]) -> Result<(f64, Vec<f64>)> {
    let per: Vec<f64> = trajectories
        .iter()
        .filter(|t| t.complete)
        .map(|t| t.costs.iter().sum())
        .collect();
    if per.is_empty() {
        return Err(Error::Usage("no complete episode in the batch".into()));
    }
    Ok((per.iter().sum::<f64>() / per.len() as f64, per))
}

fn discounted_sum(xs: &[f64], gamma: f64) -> f64 {
    xs.iter().rev().fold(0.0, |acc, x| x + gamma * acc)
}

/// How the episodic budget `d` is spread over the steps of an episode for
/// the cost-critic targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DStepMode {
    /// `d / horizon`
    PerStep,
    /// `d (1 - gamma) / (1 - gamma^horizon)`, so the discounted sum over one
    /// horizon equals `d`.
    Discounted,
}

pub fn per_step_limit(d: f64, gamma: f64, horizon: usize, mode: DStepMode) -> f64 {
    match mode {
        DStepMode::PerStep => d / horizon as f64,
        DStepMode::Discounted => d * (1.0 - gamma) / (1.0 - gamma.powi(horizon as i32)),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BatchConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub d_step: f64,
    /// Estimate `J_C(pi_k)` with discounted rather than plain episode sums.
    pub discounted_constraint: bool,
}

/// Flattened on-policy data of one epoch, ready for the update.
#[derive(Clone, Debug)]
pub struct AdvantageBatch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub adv_r: Vec<f64>,
    pub adv_c: Vec<f64>,
    pub returns_r: Vec<f64>,
    pub returns_c: Vec<f64>,
    pub vn_targets: Vec<f64>,
    pub vf_targets: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    /// Constraint estimate used inside the surrogate.
    pub jc_estimate: f64,
    pub mean_return: f64,
    pub mean_episodic_cost: f64,
    pub mean_discounted_cost: f64,
    pub episodes: usize,
}

impl AdvantageBatch {
    pub fn len(&self) -> usize {
        self.adv_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adv_r.is_empty()
    }
}

/// Mean 0, standard deviation 1 (left centred if the spread is ~0).
pub fn standardize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x -= mean;
        if std > 1e-8 {
            *x /= std;
        }
    }
}

pub fn build_batch(trajectories: &[Trajectory], critics: &Critics, cfg: &BatchConfig) -> Result<AdvantageBatch> {
    let (mean_episodic_cost, _) = episodic_costs(trajectories)?;
    let complete: Vec<&Trajectory> = trajectories.iter().filter(|t| t.complete).collect();
    let episodes = complete.len();
    let mean_return = complete.iter().map(|t| t.rewards.iter().sum::<f64>()).sum::<f64>() / episodes as f64;
    let mean_discounted_cost =
        complete.iter().map(|t| discounted_sum(&t.costs, cfg.gamma)).sum::<f64>() / episodes as f64;
    let jc_estimate = if cfg.discounted_constraint {
        mean_discounted_cost
    } else {
        mean_episodic_cost
    };

    let total: usize = trajectories.iter().map(Trajectory::len).sum();
    let mut batch = AdvantageBatch {
        observations: Vec::with_capacity(total),
        actions: Vec::with_capacity(total),
        adv_r: Vec::with_capacity(total),
        adv_c: Vec::with_capacity(total),
        returns_r: Vec::with_capacity(total),
        returns_c: Vec::with_capacity(total),
        vn_targets: Vec::with_capacity(total),
        vf_targets: Vec::with_capacity(total),
        old_log_probs: Vec::with_capacity(total),
        jc_estimate,
        mean_return,
        mean_episodic_cost,
        mean_discounted_cost,
        episodes,
    };
    for traj in trajectories {
        let mut vr = Vec::with_capacity(traj.len());
        let mut vn = Vec::with_capacity(traj.len());
        for obs in &traj.observations {
            let (r, n) = critics.values(obs)?;
            vr.push(r);
            vn.push(n);
        }
        let (boot_r, boot_n) = traj.bootstrap_values;
        let (adv_r, ret_r) = gae(&traj.rewards, &vr, boot_r, cfg.gamma, cfg.lambda)?;
        let (adv_c, ret_c) = gae(&traj.costs, &vn, boot_n, cfg.gamma, cfg.lambda)?;
        let (vn_t, vf_t) = pmn_targets(&traj.costs, &vn, boot_n, cfg.gamma, cfg.d_step)?;
        batch.observations.extend(traj.observations.iter().cloned());
        batch.actions.extend(traj.actions.iter().cloned());
        batch.adv_r.extend(adv_r);
        batch.adv_c.extend(adv_c);
        batch.returns_r.extend(ret_r);
        batch.returns_c.extend(ret_c);
        batch.vn_targets.extend(vn_t);
        batch.vf_targets.extend(vf_t);
        batch.old_log_probs.extend(&traj.log_probs);
    }
    standardize(&mut batch.adv_r);
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ContinuousEnvConfig, TabularCmdpSpec};
    use crate::policy::ActionSpace;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn discounted_to_go(xs: &[f64], gamma: f64) -> Vec<f64> {
        (0..xs.len())
            .map(|t| (t..xs.len()).map(|k| gamma.powi((k - t) as i32) * xs[k]).sum())
            .collect()
    }

    #[test]
    fn single_step_gae() {
        let (a, r) = gae(&[2.0], &[0.5], 3.0, 0.9, 0.37).unwrap();
        assert!((a[0] - (2.0 + 0.9 * 3.0 - 0.5)).abs() < 1e-12);
        assert!((r[0] - (a[0] + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_is_td_residual() {
        let rewards = [1.0, -0.5, 2.0];
        let values = [0.3, 0.1, -0.2];
        let (a, _) = gae(&rewards, &values, 0.7, 0.95, 0.0).unwrap();
        let want = [
            1.0 + 0.95 * 0.1 - 0.3,
            -0.5 + 0.95 * -0.2 - 0.1,
            2.0 + 0.95 * 0.7 + 0.2,
        ];
        for (x, y) in a.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn lambda_one_zero_baseline_is_discounted_to_go(
            xs in prop::collection::vec(0.0f64..3.0, 1..60),
            gamma in 0.5f64..0.999,
        ) {
            let zeros = vec![0.0; xs.len()];
            let (a, _) = gae(&xs, &zeros, 0.0, gamma, 1.0).unwrap();
            for (x, y) in a.iter().zip(discounted_to_go(&xs, gamma)) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn pmn_targets_nonnegative_and_squared(
            pairs in prop::collection::vec((0.0f64..2.0, -5.0f64..5.0), 1..40),
            boot in -5.0f64..5.0,
            d_step in 0.0f64..1.0,
        ) {
            let (c, v): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let (vn, vf) = pmn_targets(&c, &v, boot, 0.99, d_step).unwrap();
            for (a, b) in vn.iter().zip(&vf) {
                prop_assert!(*a >= 0.0);
                prop_assert_eq!(*b, a * a);
            }
        }
    }

    #[test]
    fn pmn_target_examples() {
        let (vn, vf) = pmn_targets(&[0.0], &[3.0], 0.0, 0.9, 0.1).unwrap();
        assert_eq!((vn[0], vf[0]), (0.0, 0.0));
        let (vn, vf) = pmn_targets(&[1.0], &[0.0], 10.0, 0.9, 0.5).unwrap();
        assert!((vn[0] - 9.5).abs() < 1e-12);
        assert!((vf[0] - 90.25).abs() < 1e-9);
    }

    fn traj(costs: &[f64], complete: bool) -> Trajectory {
        Trajectory {
            costs: costs.to_vec(),
            rewards: vec![0.0; costs.len()],
            complete,
            ..Trajectory::empty()
        }
    }

    #[test]
    fn episodic_cost_examples() {
        let (m, per) = episodic_costs(&[traj(&[0.0, 0.0], true)]).unwrap();
        assert_eq!((m, per), (0.0, vec![0.0]));
        let (m, per) = episodic_costs(&[traj(&[1.0, 0.0, 1.0], true)]).unwrap();
        assert_eq!((m, per), (2.0, vec![2.0]));
        assert!(matches!(episodic_costs(&[traj(&[1.0], false)]), Err(Error::Usage(_))));
    }

    #[test]
    fn episodic_cost_mean_matches_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trajs: Vec<Trajectory> = (0..25)
            .map(|i| {
                let n = rng.gen_range(1..30);
                let c: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 }).collect();
                traj(&c, i % 5 != 4)
            })
            .collect();
        let mut total = 0.0;
        let mut count = 0;
        for t in trajs.iter().filter(|t| t.complete) {
            for c in &t.costs {
                total += c;
            }
            count += 1;
        }
        let (m, per) = episodic_costs(&trajs).unwrap();
        assert_eq!(per.len(), count);
        assert!((m - total / count as f64).abs() < 1e-12);
    }

    fn one_action_chain(horizon: usize) -> Environment {
        Environment::tabular(TabularCmdpSpec {
            n_states: 2,
            n_actions: 1,
            transition: vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
            reward: vec![vec![1.0], vec![0.0]],
            cost: vec![vec![0.0], vec![1.0]],
            gamma: 0.9,
            initial_dist: vec![1.0, 0.0],
            cost_limit: 1.0,
            horizon,
        })
        .unwrap()
    }

    #[test]
    fn single_action_policy_logs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut env = one_action_chain(5);
        let policy = Policy::new(2, ActionSpace::Discrete(1), &[4], 0.0, &mut rng).unwrap();
        let critics = Critics::new(2, &[4], &mut rng).unwrap();
        let trajs = collect(&policy, &critics, &mut env, 12, &mut rng).unwrap();
        assert_eq!(trajs.iter().map(Trajectory::len).sum::<usize>(), 12);
        assert_eq!(trajs.len(), 3);
        assert!(!trajs[2].complete);
        for t in &trajs {
            assert!(t.actions.iter().all(|a| *a == Action::Discrete(0)));
            assert!(t.log_probs.iter().all(|&l| l == 0.0));
        }
    }

    #[test]
    fn horizon_one_marks_every_step_done() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut env = one_action_chain(1);
        let policy = Policy::new(2, ActionSpace::Discrete(1), &[], 0.0, &mut rng).unwrap();
        let critics = Critics::new(2, &[], &mut rng).unwrap();
        let trajs = collect(&policy, &critics, &mut env, 7, &mut rng).unwrap();
        assert_eq!(trajs.len(), 7);
        assert!(trajs.iter().all(|t| t.dones == vec![true] && t.complete));
    }

    #[test]
    fn collection_is_reproducible() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let mut env = Environment::continuous(ContinuousEnvConfig::velocity_1d());
            let space = env.action_space();
            let policy = Policy::new(2, space, &[8], 0.0, &mut rng).unwrap();
            let critics = Critics::new(2, &[8], &mut rng).unwrap();
            collect(&policy, &critics, &mut env, 1500, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn short_budget_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut env = one_action_chain(10);
        let policy = Policy::new(2, ActionSpace::Discrete(1), &[], 0.0, &mut rng).unwrap();
        let critics = Critics::new(2, &[], &mut rng).unwrap();
        assert!(matches!(
            collect(&policy, &critics, &mut env, 5, &mut rng),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn batch_standardizes_reward_advantages_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut env = Environment::continuous(ContinuousEnvConfig::velocity_1d());
        let space = env.action_space();
        let policy = Policy::new(2, space, &[8], 0.0, &mut rng).unwrap();
        let critics = Critics::new(2, &[8], &mut rng).unwrap();
        let trajs = collect(&policy, &critics, &mut env, 2000, &mut rng).unwrap();
        let cfg = BatchConfig {
            gamma: 0.99,
            lambda: 0.95,
            d_step: 0.025,
            discounted_constraint: false,
        };
        let b = build_batch(&trajs, &critics, &cfg).unwrap();
        let n = b.len() as f64;
        let mean = b.adv_r.iter().sum::<f64>() / n;
        let std = (b.adv_r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-6 && (std - 1.0).abs() < 1e-6);
        for (a, b) in b.vn_targets.iter().zip(&b.vf_targets) {
            assert_eq!(*b, a * a);
        }
        assert_eq!(b.episodes, 2);
    }

    #[test]
    fn d_step_modes() {
        assert!((per_step_limit(25.0, 0.99, 1000, DStepMode::PerStep) - 0.025).abs() < 1e-15);
        let g: f64 = 0.9;
        let ds = per_step_limit(3.0, g, 10, DStepMode::Discounted);
        let total: f64 = (0..10).map(|t| g.powi(t) * ds).sum();
        assert!((total - 3.0).abs() < 1e-12);
    }
}
