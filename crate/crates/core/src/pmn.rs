//! Penalty metric: filter layer, region-dependent weighting between the
//! linear and quadratic streams, and the two cost-critic losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NORM_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Feasible,
    Near,
    Mid,
    Far,
}

/// Mutable penalty-metric state carried across epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct PmnState {
    pub alpha: f64,
    /// Running max of `|F_C|` seen this run.
    pub norm_scale: f64,
    pub near_threshold: f64,
    pub far_threshold: f64,
    /// False until the scale holds a real observation.
    pub seeded: bool,
}

impl Default for PmnState {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            norm_scale: NORM_FLOOR,
            near_threshold: 0.5,
            far_threshold: 1.0,
            seeded: false,
        }
    }
}

impl PmnState {
    pub fn with_scale(norm_scale: f64) -> Self {
        Self {
            norm_scale: norm_scale.max(NORM_FLOOR),
            seeded: true,
            ..Self::default()
        }
    }

    /// `f / scale` against the scale seen so far, then the scale absorbs `|f|`.
    /// The first observation seeds the scale, so it normalises to +-1.
    pub fn normalize(&mut self, f: f64) -> f64 {
        if !self.seeded {
            self.norm_scale = f.abs().max(NORM_FLOOR);
            self.seeded = true;
        }
        let out = f / self.norm_scale;
        self.norm_scale = self.norm_scale.max(f.abs()).max(NORM_FLOOR);
        out
    }

    pub fn classify_region(&self, f_norm: f64) -> Region {
        if f_norm <= 0.0 {
            Region::Feasible
        } else if f_norm <= self.near_threshold {
            Region::Near
        } else if f_norm <= self.far_threshold {
            Region::Mid
        } else {
            Region::Far
        }
    }

    /// Sets and returns the weight for `region`; feasible keeps the old one.
    pub fn select_alpha(&mut self, region: Region) -> f64 {
        self.alpha = select_alpha(region, self.alpha);
        self.alpha
    }

    /// Normalise, classify, pick alpha, then penalise the raw violation.
    pub fn penalty_metric(&mut self, f_c: f64) -> f64 {
        let f_norm = self.normalize(f_c);
        let region = self.classify_region(f_norm);
        let alpha = self.select_alpha(region);
        phi(filter(f_c), alpha).expect("filtered value is nonnegative")
    }
}

pub fn filter(f: f64) -> f64 {
    f.max(0.0)
}

/// `alpha * f + (1 - alpha) * f^2` on a filtered violation.
pub fn phi(f_plus: f64, alpha: f64) -> Result<f64> {
    if f_plus < 0.0 {
        return Err(Error::Usage(format!("phi needs a filtered value, got {f_plus}")));
    }
    Ok(alpha * f_plus + (1.0 - alpha) * f_plus * f_plus)
}

/// `d phi / d f` at a filtered value.
pub fn phi_slope(f_plus: f64, alpha: f64) -> f64 {
    alpha + 2.0 * (1.0 - alpha) * f_plus
}

pub fn select_alpha(region: Region, previous: f64) -> f64 {
    match region {
        Region::Near => 1.0,
        Region::Mid => 0.5,
        Region::Far => 0.0,
        Region::Feasible => previous,
    }
}

pub fn vn_loss(pred: f64, target: f64) -> f64 {
    (target - pred).powi(2)
}

/// `target + pred - 2 sqrt(target * pred)`, i.e. `(sqrt(t) - sqrt(p))^2`.
pub fn vf_loss(pred: f64, target: f64) -> Result<f64> {
    if !(pred > 0.0) {
        return Err(Error::Usage(format!("V_F prediction must be positive, got {pred}")));
    }
    if target < 0.0 {
        return Err(Error::Usage(format!("V_F target must be nonnegative, got {target}")));
    }
    Ok(target + pred - 2.0 * (target * pred).sqrt())
}

/// `d vf_loss / d pred`.
pub fn vf_loss_grad(pred: f64, target: f64) -> f64 {
    1.0 - (target / pred).sqrt()
}
