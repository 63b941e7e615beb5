//! Exact tabular evaluation against long-horizon sampling.

use epo_lab::envs::{exact_advantages, exact_policy_eval, tabular_preset, tabular_step, TabularCmdpSpec};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_row<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn random_spec<R: Rng>(rng: &mut R) -> TabularCmdpSpec {
    let (ns, na) = (3, 2);
    TabularCmdpSpec {
        n_states: ns,
        n_actions: na,
        transition: (0..ns).map(|_| (0..na).map(|_| random_row(ns, rng)).collect()).collect(),
        reward: (0..ns).map(|_| (0..na).map(|_| rng.gen_range(-1.0..2.0)).collect()).collect(),
        cost: (0..ns).map(|_| (0..na).map(|_| rng.gen_range(0.0..1.0)).collect()).collect(),
        gamma: 0.8,
        initial_dist: random_row(ns, rng),
        cost_limit: 1.0,
        horizon: 100,
    }
}

struct Sample {
    mean: f64,
    se: f64,
}

fn summarize(xs: &[f64]) -> Sample {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Sample { mean, se: (var / n).sqrt() }
}

/// Discounted reward and cost of one episode, optionally forcing the first state and action.
fn episode<R: Rng>(
    spec: &TabularCmdpSpec,
    policy: &[Vec<f64>],
    start: Option<(usize, usize)>,
    steps: usize,
    rng: &mut R,
) -> (f64, f64, Vec<f64>) {
    let mut s = match start {
        Some((s, _)) => s,
        None => WeightedIndex::new(&spec.initial_dist).unwrap().sample(rng),
    };
    let (mut jr, mut jc, mut disc) = (0.0, 0.0, 1.0);
    let mut visits = vec![0.0; spec.n_states];
    for t in 0..steps {
        visits[s] += (1.0 - spec.gamma) * disc;
        let a = match (t, start) {
            (0, Some((_, a))) => a,
            _ => WeightedIndex::new(&policy[s]).unwrap().sample(rng),
        };
        let (next, r, c) = tabular_step(spec, s, a, rng).unwrap();
        jr += disc * r;
        jc += disc * c;
        disc *= spec.gamma;
        s = next;
    }
    (jr, jc, visits)
}

fn within(label: &str, exact: f64, sample: &Sample) {
    let tol = 3.0 * sample.se + 1e-9;
    assert!(
        (exact - sample.mean).abs() <= tol,
        "{label}: exact {exact}, sampled {} (3 se = {tol})",
        sample.mean
    );
}

#[test]
fn returns_and_visitation_match_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let spec = random_spec(&mut rng);
        let policy: Vec<Vec<f64>> = (0..3).map(|_| random_row(2, &mut rng)).collect();
        let exact = exact_policy_eval(&spec, &policy).unwrap();
        let runs: Vec<_> = (0..4000).map(|_| episode(&spec, &policy, None, 120, &mut rng)).collect();
        within("J_R", exact.j_r, &summarize(&runs.iter().map(|r| r.0).collect::<Vec<_>>()));
        within("J_C", exact.j_c, &summarize(&runs.iter().map(|r| r.1).collect::<Vec<_>>()));
        for s in 0..3 {
            let xs: Vec<f64> = runs.iter().map(|r| r.2[s]).collect();
            within(&format!("d({s})"), exact.visitation[s], &summarize(&xs));
        }
    }
}

#[test]
fn advantages_match_sampled_q_minus_v() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let spec = random_spec(&mut rng);
    let policy: Vec<Vec<f64>> = (0..3).map(|_| random_row(2, &mut rng)).collect();
    let eval = exact_policy_eval(&spec, &policy).unwrap();
    let adv = exact_advantages(&spec, &policy).unwrap();
    for s in 0..3 {
        for a in 0..2 {
            let runs: Vec<_> = (0..3000).map(|_| episode(&spec, &policy, Some((s, a)), 120, &mut rng)).collect();
            let q_r: Vec<f64> = runs.iter().map(|r| r.0 - eval.v_r[s]).collect();
            let q_c: Vec<f64> = runs.iter().map(|r| r.1 - eval.v_c[s]).collect();
            within(&format!("A_R({s},{a})"), adv.a_r[s][a], &summarize(&q_r));
            within(&format!("A_C({s},{a})"), adv.a_c[s][a], &summarize(&q_c));
        }
    }
}

#[test]
fn chain3_preset_values_match_sampling() {
    let spec = tabular_preset("chain3").unwrap();
    let policy = vec![vec![0.5, 0.5]; 3];
    let exact = exact_policy_eval(&spec, &policy).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let runs: Vec<_> = (0..4000).map(|_| episode(&spec, &policy, None, 200, &mut rng)).collect();
    within("chain3 J_R", exact.j_r, &summarize(&runs.iter().map(|r| r.0).collect::<Vec<_>>()));
    within("chain3 J_C", exact.j_c, &summarize(&runs.iter().map(|r| r.1).collect::<Vec<_>>()));
}
