//! Stochastic policies: a categorical head for discrete actions and a
//! diagonal Gaussian with state-independent log-std for continuous ones.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::tensorcore::{Activation, ParamVector};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { dim: usize, max_force: f64 },
}

impl ActionSpace {
    /// Width of the network output feeding the distribution.
    pub fn head_dim(&self) -> usize {
        match *self {
            ActionSpace::Discrete(n) => n,
            ActionSpace::Continuous { dim, .. } => dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Log-probability of `action` and its derivatives with respect to the head
/// output and to the log-std vector (empty for discrete spaces).
#[derive(Clone, Debug)]
pub struct LogProbGrad {
    pub log_prob: f64,
    pub d_head: Vec<f64>,
    pub d_log_std: Vec<f64>,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn log_prob_grad(head: &[f64], log_std: &[f64], action: &Action) -> LogProbGrad {
    match action {
        Action::Discrete(a) => {
            let lp = log_softmax(head);
            let d_head = lp
                .iter()
                .enumerate()
                .map(|(i, l)| if i == *a { 1.0 } else { 0.0 } - l.exp())
                .collect();
            LogProbGrad {
                log_prob: lp[*a],
                d_head,
                d_log_std: Vec::new(),
            }
        }
        Action::Continuous(x) => {
            let mut log_prob = 0.0;
            let mut d_head = Vec::with_capacity(x.len());
            let mut d_log_std = Vec::with_capacity(x.len());
            for ((&xi, &mi), &ls) in x.iter().zip(head).zip(log_std) {
                let inv_var = (-2.0 * ls).exp();
                let diff = xi - mi;
                log_prob += -0.5 * diff * diff * inv_var - ls - 0.5 * LN_2PI;
                d_head.push(diff * inv_var);
                d_log_std.push(diff * diff * inv_var - 1.0);
            }
            LogProbGrad {
                log_prob,
                d_head,
                d_log_std,
            }
        }
    }
}

pub fn log_prob(head: &[f64], log_std: &[f64], action: &Action) -> f64 {
    match action {
        Action::Discrete(a) => log_softmax(head)[*a],
        Action::Continuous(x) => x
            .iter()
            .zip(head)
            .zip(log_std)
            .map(|((&xi, &mi), &ls)| {
                let diff = xi - mi;
                -0.5 * diff * diff * (-2.0 * ls).exp() - ls - 0.5 * LN_2PI
            })
            .sum(),
    }
}

/// KL(new || old) between two action distributions at one state.
pub fn kl_divergence(space: ActionSpace, new_head: &[f64], new_log_std: &[f64], old_head: &[f64], old_log_std: &[f64]) -> f64 {
    match space {
        ActionSpace::Discrete(_) => {
            let lp = log_softmax(new_head);
            let lq = log_softmax(old_head);
            lp.iter().zip(&lq).map(|(p, q)| p.exp() * (p - q)).sum::<f64>().max(0.0)
        }
        ActionSpace::Continuous { .. } => new_head
            .iter()
            .zip(new_log_std)
            .zip(old_head.iter().zip(old_log_std))
            .map(|((&mn, &ln), (&mo, &lo))| {
                let var_ratio = (2.0 * (ln - lo)).exp();
                let d = mn - mo;
                lo - ln + 0.5 * (var_ratio + d * d * (-2.0 * lo).exp()) - 0.5
            })
            .sum::<f64>()
            .max(0.0),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    net: ParamVector,
    log_std: Vec<f64>,
    space: ActionSpace,
}

impl Policy {
    /// Tanh MLP `obs_dim -> hidden... -> head_dim`; the output layer starts
    /// near zero so the initial policy is close to uniform / zero-mean.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        space: ActionSpace,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(space.head_dim());
        let net = ParamVector::init(&sizes, Activation::Tanh, 0.01, rng)?;
        Self::from_parts(net, init_log_std, space)
    }

    pub fn from_parts(net: ParamVector, init_log_std: f64, space: ActionSpace) -> Result<Self> {
        if net.output_dim() != space.head_dim() {
            return Err(Error::Config(format!(
                "policy head has {} outputs, action space needs {}",
                net.output_dim(),
                space.head_dim()
            )));
        }
        let log_std = match space {
            ActionSpace::Discrete(_) => Vec::new(),
            ActionSpace::Continuous { dim, .. } => vec![init_log_std; dim],
        };
        Ok(Self { net, log_std, space })
    }

    pub fn net(&self) -> &ParamVector {
        &self.net
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn space(&self) -> ActionSpace {
        self.space
    }

    pub fn n_params(&self) -> usize {
        self.net.len() + self.log_std.len()
    }

    /// Network weights followed by the log-std entries.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.net.values().to_vec();
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Usage(format!(
                "policy has {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let n = self.net.len();
        self.net.values_mut().copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..]);
        Ok(())
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let mut p = self.clone();
        p.set_flat(flat)?;
        Ok(p)
    }

    /// Logits (discrete) or mean (continuous).
    pub fn head(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let h = self.net.mlp_eval(obs)?;
        for v in &h {
            ensure_finite("policy output", *v)?;
        }
        Ok(h)
    }

    pub fn log_prob(&self, obs: &[f64], action: &Action) -> Result<f64> {
        Ok(log_prob(&self.head(obs)?, &self.log_std, action))
    }

    /// Action probabilities of a discrete policy.
    pub fn action_probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match self.space {
            ActionSpace::Discrete(_) => Ok(softmax(&self.head(obs)?)),
            ActionSpace::Continuous { .. } => {
                Err(Error::Usage("action probabilities need a discrete policy".into()))
            }
        }
    }

    /// Draws an action and returns it with its log-probability under the
    /// unclipped distribution.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Action, f64)> {
        let head = self.head(obs)?;
        let action = match self.space {
            ActionSpace::Discrete(_) => {
                let probs = softmax(&head);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut chosen = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                Action::Discrete(chosen)
            }
            ActionSpace::Continuous { .. } => Action::Continuous(
                head.iter()
                    .zip(&self.log_std)
                    .map(|(m, ls)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + ls.exp() * z
                    })
                    .collect(),
            ),
        };
        let lp = log_prob(&head, &self.log_std, &action);
        ensure_finite("sampled log-probability", lp)?;
        Ok((action, lp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorcore::LayerShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_action_policy_is_certain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Policy::new(3, ActionSpace::Discrete(1), &[4], 0.0, &mut rng).unwrap();
        for _ in 0..10 {
            let (a, lp) = p.sample(&[1.0, 0.0, 0.0], &mut rng).unwrap();
            assert_eq!(a, Action::Discrete(0));
            assert_eq!(lp, 0.0);
        }
    }

    #[test]
    fn log_prob_gradients_match_differences() {
        let head = [0.3, -0.7];
        let log_std = [-0.2, 0.4];
        let a = Action::Continuous(vec![0.5, -1.0]);
        let g = log_prob_grad(&head, &log_std, &a);
        let h = 1e-6;
        for i in 0..2 {
            let mut up = head;
            up[i] += h;
            let mut dn = head;
            dn[i] -= h;
            let num = (log_prob(&up, &log_std, &a) - log_prob(&dn, &log_std, &a)) / (2.0 * h);
            assert!((num - g.d_head[i]).abs() < 1e-7);
            let mut up = log_std;
            up[i] += h;
            let mut dn = log_std;
            dn[i] -= h;
            let num = (log_prob(&head, &up, &a) - log_prob(&head, &dn, &a)) / (2.0 * h);
            assert!((num - g.d_log_std[i]).abs() < 1e-7);
        }
        let logits = [0.1, 2.0, -1.0];
        let g = log_prob_grad(&logits, &[], &Action::Discrete(2));
        let sum: f64 = g.d_head.iter().sum();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn kl_is_zero_for_identical_and_positive_otherwise() {
        let disc = ActionSpace::Discrete(3);
        assert_eq!(kl_divergence(disc, &[0.1, 0.2, 0.3], &[], &[0.1, 0.2, 0.3], &[]), 0.0);
        assert!(kl_divergence(disc, &[1.0, 0.2, 0.3], &[], &[0.1, 0.2, 0.3], &[]) > 0.0);
        let cont = ActionSpace::Continuous { dim: 1, max_force: 1.0 };
        assert_eq!(kl_divergence(cont, &[0.5], &[0.1], &[0.5], &[0.1]), 0.0);
        // N(1, 1) vs N(0, 1): KL = 1/2
        let kl = kl_divergence(cont, &[1.0], &[0.0], &[0.0], &[0.0]);
        assert!((kl - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gaussian_sample_mean_matches_policy_mean() {
        // fixed mean 0.4, std e^{-0.5}
        let net = ParamVector::new(
            vec![0.0, 0.0, 0.4],
            vec![LayerShape::new(1, 2, true)],
            Activation::Tanh,
        )
        .unwrap();
        let space = ActionSpace::Continuous { dim: 1, max_force: 1.0 };
        let p = Policy::from_parts(net, -0.5, space).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            if let (Action::Continuous(a), _) = p.sample(&[0.3, -0.2], &mut rng).unwrap() {
                sum += a[0];
            }
        }
        let mean = sum / n as f64;
        let sigma = (-0.5f64).exp();
        assert!((mean - 0.4).abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let space = ActionSpace::Continuous { dim: 2, max_force: 1.0 };
        let mut p = Policy::new(3, space, &[5], -0.3, &mut rng).unwrap();
        let mut flat = p.flat();
        assert_eq!(flat.len(), p.n_params());
        *flat.last_mut().unwrap() = 0.7;
        p.set_flat(&flat).unwrap();
        assert_eq!(p.log_std()[1], 0.7);
        assert!(p.set_flat(&flat[1..]).is_err());
    }
}
