//! Closed-form penalty problems and their grid-search maximisers.

use serde_json::json;

use crate::error::{Error, Result};
use crate::pmn::phi;

use super::BoundReport;

pub const MIN_RESOLUTION: usize = 1000;
/// Cells per coarse cell in the refinement pass.
const REFINE: usize = 10;

/// Maximise `f_r` subject to `f_c <= 0` over a box.
#[derive(Clone, Debug)]
pub struct AnalyticProblem {
    pub name: &'static str,
    pub f_r: fn(&[f64]) -> f64,
    pub f_c: fn(&[f64]) -> f64,
    pub bounds: Vec<(f64, f64)>,
    /// Constrained maximiser and its multiplier.
    pub known_optimum: Option<(Vec<f64>, f64)>,
}

impl AnalyticProblem {
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// `F_R(x) - phi(max(F_C(x), 0), alpha) / mu`.
    pub fn penalty(&self, x: &[f64], mu: f64, alpha: f64) -> f64 {
        let v = (self.f_c)(x).max(0.0);
        (self.f_r)(x) - phi(v, alpha).expect("filtered") / mu
    }

    /// `F_R = -x^2`, `F_C = 1 - x` on `[-2, 2]`: optimum `x = 1`, multiplier 2.
    pub fn quadratic() -> Self {
        Self {
            name: "quadratic",
            f_r: |x| -x[0] * x[0],
            f_c: |x| 1.0 - x[0],
            bounds: vec![(-2.0, 2.0)],
            known_optimum: Some((vec![1.0], 2.0)),
        }
    }

    /// `F_R = x`, `F_C = x^2 - 1` on `[-2, 2]`: optimum `x = 1`, multiplier 1/2.
    pub fn quadratic_constraint() -> Self {
        Self {
            name: "quadratic_constraint",
            f_r: |x| x[0],
            f_c: |x| x[0] * x[0] - 1.0,
            bounds: vec![(-2.0, 2.0)],
            known_optimum: Some((vec![1.0], 0.5)),
        }
    }

    /// `F_R = -(x^2 + y^2)`, `F_C = 1 - x - y` on `[-2, 2]^2`: optimum `(1/2, 1/2)`, multiplier 1.
    pub fn separable_2d() -> Self {
        Self {
            name: "separable_2d",
            f_r: |x| -(x[0] * x[0] + x[1] * x[1]),
            f_c: |x| 1.0 - x[0] - x[1],
            bounds: vec![(-2.0, 2.0), (-2.0, 2.0)],
            known_optimum: Some((vec![0.5, 0.5], 1.0)),
        }
    }

    /// Width of one coarse cell per dimension.
    pub fn cell(&self, resolution: usize) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| (hi - lo) / resolution as f64).collect()
    }

    /// Largest change of `f` within `reach` of `x` along any axis.
    fn variation(&self, f: impl Fn(&[f64]) -> f64, x: &[f64], reach: &[f64]) -> f64 {
        let base = f(x);
        let mut worst: f64 = 0.0;
        let mut p = x.to_vec();
        for i in 0..x.len() {
            for sign in [-1.0, 1.0] {
                p[i] = (x[i] + sign * reach[i]).clamp(self.bounds[i].0, self.bounds[i].1);
                worst = worst.max((f(&p) - base).abs());
                p[i] = x[i];
            }
        }
        worst
    }
}

pub fn shipped_problems() -> Vec<AnalyticProblem> {
    vec![
        AnalyticProblem::quadratic(),
        AnalyticProblem::quadratic_constraint(),
        AnalyticProblem::separable_2d(),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridMax {
    pub x: Vec<f64>,
    pub value: f64,
    /// Coarse cell widths.
    pub cell: Vec<f64>,
}

/// Best point of an axis-aligned grid; ties go to the lowest index
/// (first axis slowest).
fn scan(axes: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut idx = vec![0usize; axes.len()];
    let mut x: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let mut best = (x.clone(), f64::NEG_INFINITY);
    loop {
        let v = f(&x);
        if v > best.1 {
            best = (x.clone(), v);
        }
        let mut k = axes.len();
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                x[k] = axes[k][idx[k]];
                break;
            }
            idx[k] = 0;
            x[k] = axes[k][0];
        }
    }
}

/// Exhaustive grid (`resolution` cells per axis, endpoints included) followed
/// by one tenfold refinement around the winner.
pub fn grid_global_max(problem: &AnalyticProblem, mu: f64, alpha: f64, resolution: usize) -> Result<GridMax> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::Usage(format!("grid resolution must be at least {MIN_RESOLUTION}, got {resolution}")));
    }
    if problem.dim() == 0 || problem.dim() > 2 {
        return Err(Error::Usage(format!("grid search supports 1 or 2 dimensions, got {}", problem.dim())));
    }
    if !(mu > 0.0) {
        return Err(Error::Usage(format!("mu must be positive, got {mu}")));
    }
    let cell = problem.cell(resolution);
    let coarse: Vec<Vec<f64>> = problem
        .bounds
        .iter()
        .zip(&cell)
        .map(|(&(lo, _), &h)| (0..=resolution).map(|i| lo + i as f64 * h).collect())
        .collect();
    let objective = |x: &[f64]| problem.penalty(x, mu, alpha);
    let (centre, _) = scan(&coarse, objective);
    let fine: Vec<Vec<f64>> = centre
        .iter()
        .zip(&cell)
        .zip(&problem.bounds)
        .map(|((&c, &h), &(lo, hi))| {
            let step = h / REFINE as f64;
            (0..=2 * REFINE)
                .map(|i| c - h + i as f64 * step)
                .filter(|&x| x >= lo && x <= hi)
                .collect()
        })
        .collect();
    let (x, value) = scan(&fine, objective);
    Ok(GridMax { x, value, cell })
}

/// Checks the monotone chains of the penalty maximisers along a decreasing
/// `mu` sequence: `F_R(x_bar) <= P_t <= F_R(x_t)`, `P_t` and `F_R(x_t)`
/// non-increasing, and the violation `F_C(x_t)` non-increasing while positive.
/// Each comparison gets the variation of the compared function over two
/// coarse cells as tolerance.
pub fn verify_lemma1(
    problem: &AnalyticProblem,
    mu_sequence: &[f64],
    alpha: f64,
    resolution: usize,
) -> Result<Vec<BoundReport>> {
    if mu_sequence.is_empty() || mu_sequence.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Usage("mu sequence must be nonempty and positive".into()));
    }
    if mu_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Usage("mu sequence must be strictly decreasing".into()));
    }
    let maxima = mu_sequence
        .iter()
        .map(|&mu| grid_global_max(problem, mu, alpha, resolution))
        .collect::<Result<Vec<_>>>()?;
    let reach: Vec<f64> = problem.cell(resolution).iter().map(|h| 2.0 * h).collect();
    let f_r = problem.f_r;
    let f_c = problem.f_c;
    let mut out = Vec::new();
    for (t, (m, &mu)) in maxima.iter().zip(mu_sequence).enumerate() {
        let inputs = json!({"problem": problem.name, "t": t, "mu": mu, "alpha": alpha, "x_t": m.x});
        let tol_p = problem.variation(|x| problem.penalty(x, mu, alpha), &m.x, &reach);
        let tol_r = problem.variation(f_r, &m.x, &reach);
        if let Some((x_bar, _)) = &problem.known_optimum {
            let tol_bar = problem.variation(f_r, x_bar, &reach);
            out.push(BoundReport::new(
                format!("{}/lower_bound/t={t}", problem.name),
                f_r(x_bar),
                m.value + tol_bar + tol_p,
                inputs.clone(),
            ));
        }
        out.push(BoundReport::new(
            format!("{}/upper_bound/t={t}", problem.name),
            m.value,
            f_r(&m.x) + tol_r,
            inputs.clone(),
        ));
        if let Some(next) = maxima.get(t + 1) {
            let tol_next_p = problem.variation(|x| problem.penalty(x, mu_sequence[t + 1], alpha), &next.x, &reach);
            let tol_next_r = problem.variation(f_r, &next.x, &reach);
            out.push(BoundReport::new(
                format!("{}/penalty_nonincreasing/t={t}", problem.name),
                next.value,
                m.value + tol_p + tol_next_p,
                inputs.clone(),
            ));
            out.push(BoundReport::new(
                format!("{}/objective_nonincreasing/t={t}", problem.name),
                f_r(&next.x),
                f_r(&m.x) + tol_r + tol_next_r,
                inputs.clone(),
            ));
            if f_c(&m.x) > 0.0 {
                let tol_c = problem.variation(f_c, &m.x, &reach) + problem.variation(f_c, &next.x, &reach);
                out.push(BoundReport::new(
                    format!("{}/violation_nonincreasing/t={t}", problem.name),
                    f_c(&next.x),
                    f_c(&m.x) + tol_c,
                    inputs,
                ));
            }
        }
    }
    Ok(out)
}

/// Distance (max norm) between the `alpha = 1` grid maximiser and the
/// constrained optimum, against two refined cells.
pub fn verify_corollary1(problem: &AnalyticProblem, mu: f64, resolution: usize) -> Result<BoundReport> {
    let (x_bar, lambda) = problem
        .known_optimum
        .clone()
        .ok_or_else(|| Error::Usage(format!("problem {} has no known optimum", problem.name)))?;
    let m = grid_global_max(problem, mu, 1.0, resolution)?;
    let dist = m.x.iter().zip(&x_bar).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let fine = m.cell.iter().cloned().fold(0.0, f64::max) / REFINE as f64;
    let below_threshold = mu < 1.0 / lambda;
    if !below_threshold {
        log::info!("mu = {mu} is not below 1/lambda* = {}; exactness is not expected", 1.0 / lambda);
    }
    Ok(BoundReport::new(
        format!("{}/exact_penalty/mu={mu}", problem.name),
        dist,
        2.0 * fine,
        json!({
            "problem": problem.name,
            "mu": mu,
            "lambda_star": lambda,
            "below_threshold": below_threshold,
            "x_star": m.x,
            "x_bar": x_bar,
            "p_star": m.value,
        }),
    ))
}
