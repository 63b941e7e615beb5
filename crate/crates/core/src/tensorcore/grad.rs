use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};

/// A scalar that takes part in the forward value but never in the gradient.
///
/// Objectives store detached factors as this type, computed once at a
/// reference point; `Objective::value` then treats them as constants, which
/// is exactly what the analytic gradient does.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Detached(f64);

impl Detached {
    pub fn new(value: f64) -> Self {
        Self(value)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn value(&self, params: &[f64]) -> f64;

    fn value_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>);
}

/// Analytic value and gradient, rejecting non-finite results.
pub fn value_and_grad<O: Objective + ?Sized>(objective: &O, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (v, g) = objective.value_and_grad(params);
    ensure_finite("objective value", v)?;
    if g.len() != params.len() {
        return Err(Error::Internal(format!(
            "gradient has {} entries for {} parameters",
            g.len(),
            params.len()
        )));
    }
    if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
        return Err(Error::numeric("objective gradient", *bad));
    }
    Ok((v, g))
}

/// Central differences, one coordinate at a time.
pub fn finite_diff_grad<O: Objective + ?Sized>(objective: &O, params: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Usage(format!("finite-difference step must be positive, got {h}")));
    }
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = ensure_finite("finite difference (+h)", objective.value(&p))?;
        p[i] = orig - h;
        let down = ensure_finite("finite difference (-h)", objective.value(&p))?;
        p[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct GradReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_err: f64,
}

/// Denominator floor of the relative error, so that coordinates whose true
/// gradient is zero compare on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(REL_ERR_FLOOR)
}

pub fn grad_check<O: Objective + ?Sized>(objective: &O, params: &[f64], h: f64) -> Result<GradReport> {
    let (_, analytic) = value_and_grad(objective, params)?;
    let numeric = finite_diff_grad(objective, params, h)?;
    let max_rel_err = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max);
    Ok(GradReport {
        analytic,
        numeric,
        max_rel_err,
    })
}
