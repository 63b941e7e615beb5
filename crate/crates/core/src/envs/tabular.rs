use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite CMDP with known dynamics. Field names are the JSON schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularCmdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub cost: Vec<Vec<f64>>,
    pub gamma: f64,
    pub initial_dist: Vec<f64>,
    pub cost_limit: f64,
    pub horizon: usize,
}

/// Exact discounted evaluation of a stationary policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEval {
    pub j_r: f64,
    pub j_c: f64,
    /// `(1 - gamma) * sum_t gamma^t Pr[s_t = s]` from the initial distribution.
    pub visitation: Vec<f64>,
    pub v_r: Vec<f64>,
    pub v_c: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Advantages {
    pub a_r: Vec<Vec<f64>>,
    pub a_c: Vec<Vec<f64>>,
}

const SUM_TOL: f64 = 1e-12;

impl TabularCmdpSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(Error::Config("tabular CMDP needs states and actions".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let shape_ok = self.transition.len() == ns
            && self.reward.len() == ns
            && self.cost.len() == ns
            && self.initial_dist.len() == ns
            && self.transition.iter().all(|row| row.len() == na && row.iter().all(|p| p.len() == ns))
            && self.reward.iter().all(|r| r.len() == na)
            && self.cost.iter().all(|c| c.len() == na);
        if !shape_ok {
            return Err(Error::Config("tabular CMDP tensors have inconsistent shapes".into()));
        }
        for (s, row) in self.transition.iter().enumerate() {
            for (a, p) in row.iter().enumerate() {
                check_distribution(p, &format!("transition[{s}][{a}]"))?;
            }
        }
        check_distribution(&self.initial_dist, "initial_dist")?;
        if self.cost.iter().flatten().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::Config("costs must be finite and nonnegative".into()));
        }
        if self.reward.iter().flatten().any(|r| !r.is_finite()) {
            return Err(Error::Config("rewards must be finite".into()));
        }
        Ok(())
    }

    pub fn one_hot(&self, state: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        v[state] = 1.0;
        v
    }

    /// Multiplies every cost entry by `factor`.
    pub fn scaled_costs(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.cost {
            for c in row {
                *c *= factor;
            }
        }
        out
    }

    pub fn check_policy(&self, policy: &[Vec<f64>]) -> Result<()> {
        if policy.len() != self.n_states || policy.iter().any(|p| p.len() != self.n_actions) {
            return Err(Error::Usage("policy matrix shape does not match the CMDP".into()));
        }
        for (s, p) in policy.iter().enumerate() {
            if p.iter().any(|&x| x < -1e-12) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Usage(format!("policy row {s} is not a probability vector")));
            }
        }
        Ok(())
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Config(format!("{what} has negative entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(Error::Config(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Samples `s' ~ P[state][action]`; returns `(s', reward, cost)`.
pub fn tabular_step<R: Rng + ?Sized>(
    spec: &TabularCmdpSpec,
    state: usize,
    action: usize,
    rng: &mut R,
) -> Result<(usize, f64, f64)> {
    if state >= spec.n_states || action >= spec.n_actions {
        return Err(Error::Usage(format!(
            "state {state} / action {action} out of range ({} states, {} actions)",
            spec.n_states, spec.n_actions
        )));
    }
    let row = &spec.transition[state][action];
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut next = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (s, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            next = s;
            break;
        }
    }
    Ok((next, spec.reward[state][action], spec.cost[state][action]))
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    a.lu()
        .solve(&b)
        .ok_or_else(|| Error::Internal("singular policy-evaluation system".into()))
}

/// `I - gamma * P_pi`.
fn evaluation_matrix(spec: &TabularCmdpSpec, policy: &[Vec<f64>]) -> DMatrix<f64> {
    let n = spec.n_states;
    DMatrix::from_fn(n, n, |s, t| {
        let p: f64 = (0..spec.n_actions)
            .map(|a| policy[s][a] * spec.transition[s][a][t])
            .sum();
        if s == t {
            1.0 - spec.gamma * p
        } else {
            -spec.gamma * p
        }
    })
}

pub fn exact_policy_eval(spec: &TabularCmdpSpec, policy: &[Vec<f64>]) -> Result<PolicyEval> {
    spec.check_policy(policy)?;
    let n = spec.n_states;
    let m = evaluation_matrix(spec, policy);
    let expect = |table: &Vec<Vec<f64>>| {
        DVector::from_fn(n, |s, _| {
            (0..spec.n_actions).map(|a| policy[s][a] * table[s][a]).sum::<f64>()
        })
    };
    let v_r = solve(m.clone(), expect(&spec.reward))?;
    let v_c = solve(m.clone(), expect(&spec.cost))?;
    let rho = DVector::from_column_slice(&spec.initial_dist);
    let occupancy = solve(m.transpose(), rho.clone())?;
    let visitation: Vec<f64> = occupancy.iter().map(|x| (1.0 - spec.gamma) * x).collect();
    Ok(PolicyEval {
        j_r: rho.dot(&v_r),
        j_c: rho.dot(&v_c),
        visitation,
        v_r: v_r.iter().copied().collect(),
        v_c: v_c.iter().copied().collect(),
    })
}

/// Exact `Q - V` for both channels, from an already computed evaluation.
pub fn advantages_from_eval(spec: &TabularCmdpSpec, eval: &PolicyEval) -> Advantages {
    let q = |table: &Vec<Vec<f64>>, v: &[f64], s: usize, a: usize| {
        table[s][a]
            + spec.gamma
                * spec.transition[s][a]
                    .iter()
                    .zip(v)
                    .map(|(p, vn)| p * vn)
                    .sum::<f64>()
    };
    let build = |table: &Vec<Vec<f64>>, v: &[f64]| {
        (0..spec.n_states)
            .map(|s| (0..spec.n_actions).map(|a| q(table, v, s, a) - v[s]).collect())
            .collect()
    };
    Advantages {
        a_r: build(&spec.reward, &eval.v_r),
        a_c: build(&spec.cost, &eval.v_c),
    }
}

pub fn exact_advantages(spec: &TabularCmdpSpec, policy: &[Vec<f64>]) -> Result<Advantages> {
    let eval = exact_policy_eval(spec, policy)?;
    Ok(advantages_from_eval(spec, &eval))
}

/// Stepping wrapper with an episode clock.
#[derive(Clone, Debug)]
pub struct TabularEnv {
    spec: TabularCmdpSpec,
    state: usize,
    t: usize,
}

impl TabularEnv {
    pub fn new(spec: TabularCmdpSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, state: 0, t: 0 })
    }

    pub fn spec(&self) -> &TabularCmdpSpec {
        &self.spec
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        self.state = self.spec.n_states - 1;
        for (s, &p) in self.spec.initial_dist.iter().enumerate() {
            acc += p;
            if u < acc {
                self.state = s;
                break;
            }
        }
        self.t = 0;
        self.spec.one_hot(self.state)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<super::StepResult> {
        let (next, reward, cost) = tabular_step(&self.spec, self.state, action, rng)?;
        self.state = next;
        self.t += 1;
        let ended = self.t >= self.spec.horizon;
        Ok(super::StepResult {
            next_observation: self.spec.one_hot(next),
            reward,
            cost,
            done: ended,
            truncated: ended,
        })
    }
}
