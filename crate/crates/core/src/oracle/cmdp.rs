//! Exhaustive search over stochastic policies of a small tabular CMDP.

use serde::Serialize;

use crate::envs::{exact_policy_eval, TabularCmdpSpec};
use crate::error::{Error, Result};

pub const MAX_FREE_PARAMS: usize = 4;
const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BruteForceResult {
    pub policy: Vec<Vec<f64>>,
    pub j_r: f64,
    pub j_c: f64,
    /// False when no grid policy meets the limit; `policy` then minimises cost.
    pub feasible: bool,
    pub evaluated: usize,
}

/// Every action distribution whose first `n_actions - 1` entries lie on the
/// grid `{0, 1/(g-1), ..., 1}` and sum to at most one.
pub fn state_choices(n_actions: usize, grid_per_param: usize) -> Vec<Vec<f64>> {
    let g = grid_per_param.max(2);
    let free = n_actions.saturating_sub(1);
    let mut out = Vec::new();
    let mut idx = vec![0usize; free];
    loop {
        let total: usize = idx.iter().sum();
        if total < g {
            let mut p: Vec<f64> = idx.iter().map(|&i| i as f64 / (g - 1) as f64).collect();
            let rest = (1.0 - p.iter().sum::<f64>()).max(0.0);
            p.push(rest);
            out.push(p);
        }
        let mut k = free;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < g {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Calls `f` on every grid policy (state 0 varies slowest).
pub fn for_each_policy(
    spec: &TabularCmdpSpec,
    grid_per_param: usize,
    mut f: impl FnMut(&[Vec<f64>]) -> Result<()>,
) -> Result<()> {
    let free = spec.n_states * spec.n_actions.saturating_sub(1);
    if free > MAX_FREE_PARAMS {
        return Err(Error::Usage(format!(
            "brute force handles at most {MAX_FREE_PARAMS} free policy parameters, this CMDP has {free}"
        )));
    }
    let choices = state_choices(spec.n_actions, grid_per_param);
    let mut idx = vec![0usize; spec.n_states];
    let mut policy: Vec<Vec<f64>> = vec![choices[0].clone(); spec.n_states];
    loop {
        f(&policy)?;
        let mut k = spec.n_states;
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < choices.len() {
                policy[k].clone_from(&choices[idx[k]]);
                break;
            }
            idx[k] = 0;
            policy[k].clone_from(&choices[0]);
        }
    }
}

/// Best feasible grid policy by exact evaluation.
pub fn brute_force_cmdp(spec: &TabularCmdpSpec, grid_per_param: usize) -> Result<BruteForceResult> {
    spec.validate()?;
    let d = spec.cost_limit;
    let mut best_feasible: Option<(Vec<Vec<f64>>, f64, f64)> = None;
    let mut cheapest: Option<(Vec<Vec<f64>>, f64, f64)> = None;
    let mut evaluated = 0;
    for_each_policy(spec, grid_per_param, |policy| {
        let e = exact_policy_eval(spec, policy)?;
        evaluated += 1;
        if e.j_c <= d + FEASIBILITY_TOL && best_feasible.as_ref().map_or(true, |b| e.j_r > b.1) {
            best_feasible = Some((policy.to_vec(), e.j_r, e.j_c));
        }
        if cheapest.as_ref().map_or(true, |b| e.j_c < b.2) {
            cheapest = Some((policy.to_vec(), e.j_r, e.j_c));
        }
        Ok(())
    })?;
    let (feasible, (policy, j_r, j_c)) = match best_feasible {
        Some(b) => (true, b),
        None => (false, cheapest.expect("at least one policy evaluated")),
    };
    Ok(BruteForceResult { policy, j_r, j_c, feasible, evaluated })
}
