//! The three value approximators: reward critic `V_R`, the linear cost
//! critic `V_N` and the quadratic cost critic `V_F` (positive head).

use rand::Rng;

use crate::error::{ensure_finite, Result};
use crate::tensorcore::{Activation, ParamVector};

#[derive(Clone, Debug, PartialEq)]
pub struct Critics {
    pub vr: ParamVector,
    pub vn: ParamVector,
    pub vf: ParamVector,
}

impl Critics {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(Self {
            vr: ParamVector::init(&sizes, Activation::Tanh, 1.0, rng)?,
            vn: ParamVector::init(&sizes, Activation::Tanh, 1.0, rng)?,
            vf: ParamVector::init(&sizes, Activation::SoftplusPositiveHead, 1.0, rng)?,
        })
    }

    /// `(V_R(s), V_N(s))`.
    pub fn values(&self, obs: &[f64]) -> Result<(f64, f64)> {
        let vr = ensure_finite("V_R", self.vr.mlp_eval(obs)?[0])?;
        let vn = ensure_finite("V_N", self.vn.mlp_eval(obs)?[0])?;
        Ok((vr, vn))
    }
}
