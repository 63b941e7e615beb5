use crate::error::{Error, Result};

/// Adam state for one parameter vector. Steps minimise.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub numeric_floor: f64,
}

impl OptimizerState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            numeric_floor: 1e-8,
        }
    }

    /// In-place bias-corrected Adam update.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() || params.len() != self.first_moment.len() {
            return Err(Error::Usage(format!(
                "adam length mismatch: params {}, grad {}, moments {}",
                params.len(),
                grad.len(),
                self.first_moment.len()
            )));
        }
        if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::numeric("adam gradient", *bad));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            params[i] -= self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.numeric_floor);
        }
        Ok(())
    }
}

/// Value-style wrapper around [`OptimizerState::step`].
pub fn adam_step(
    state: &OptimizerState,
    params: &[f64],
    grad: &[f64],
) -> Result<(Vec<f64>, OptimizerState)> {
    let mut next = state.clone();
    let mut p = params.to_vec();
    next.step(&mut p, grad)?;
    Ok((p, next))
}
