//! Scalar building blocks of the policy objective.

use crate::error::{Error, Result};
use crate::pmn::{phi, phi_slope};
use crate::tensorcore::{logistic, softplus};

/// Importance ratios are clamped here instead of overflowing.
pub const RATIO_CEILING: f64 = 1e6;
/// Exponent cap of the adaptive factor `e^{L_C} / mu`.
pub const PSI_EXPONENT_CAP: f64 = 30.0;
pub const MU_FLOOR: f64 = 1e-6;

/// `exp(logp_new - logp_old)`, clamped at [`RATIO_CEILING`].
pub fn ratio(logp_new: f64, logp_old: f64) -> f64 {
    ratio_checked(logp_new, logp_old).0
}

/// Ratio plus whether the ceiling was hit (a clamped ratio has zero slope).
pub fn ratio_checked(logp_new: f64, logp_old: f64) -> (f64, bool) {
    let r = (logp_new - logp_old).exp();
    if r > RATIO_CEILING || r.is_nan() {
        log::warn!("importance ratio {r:e} clamped to {RATIO_CEILING:e}");
        (RATIO_CEILING, true)
    } else {
        (r, false)
    }
}

/// `min(r A, clip(r, 1-eps, 1+eps) A)` and its derivative in `r`.
pub fn clipped_term(r: f64, adv: f64, eps: f64) -> (f64, f64) {
    let unclipped = r * adv;
    let clipped = r.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (unclipped, adv)
    } else {
        (clipped, 0.0)
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Usage(format!("{a} ratios vs {b} advantages")));
    }
    if a == 0 {
        return Err(Error::Usage("empty batch".into()));
    }
    Ok(())
}

pub fn clip_surrogate_reward(ratios: &[f64], adv_r: &[f64], eps: f64) -> Result<f64> {
    check_lengths(ratios.len(), adv_r.len())?;
    let total: f64 = ratios.iter().zip(adv_r).map(|(&r, &a)| clipped_term(r, a, eps).0).sum();
    Ok(total / ratios.len() as f64)
}

/// `(1/(1-gamma)) * mean(min(r A_C, clip(r) A_C)) + jc_k - d`.
pub fn clip_surrogate_cost(ratios: &[f64], adv_c: &[f64], eps: f64, jc_k: f64, d: f64, gamma: f64) -> Result<f64> {
    check_lengths(ratios.len(), adv_c.len())?;
    let total: f64 = ratios.iter().zip(adv_c).map(|(&r, &a)| clipped_term(r, a, eps).0).sum();
    Ok(total / ratios.len() as f64 / (1.0 - gamma) + jc_k - d)
}

/// Adaptive factor `e^{min(l_c, 30)} / mu`; callers hold it fixed while differentiating.
pub fn adaptive_factor(l_c: f64, mu: f64) -> f64 {
    l_c.min(PSI_EXPONENT_CAP).exp() / mu
}

/// Returns `(objective, psi)` with `objective = l_r - psi * phi(softplus(l_c), alpha)`.
pub fn smooth_penalty_objective(l_r: f64, l_c: f64, mu: f64, alpha: f64) -> (f64, f64) {
    let psi = adaptive_factor(l_c, mu);
    (l_r - smooth_penalty(l_c, psi, alpha), psi)
}

/// `psi * phi(softplus(l_c), alpha)` for a given (frozen) `psi`.
pub fn smooth_penalty(l_c: f64, psi: f64, alpha: f64) -> f64 {
    let s = softplus(l_c);
    psi * (alpha * s + (1.0 - alpha) * s * s)
}

/// Derivative of [`smooth_penalty`] in `l_c` with `psi` held constant.
pub fn smooth_penalty_slope(l_c: f64, psi: f64, alpha: f64) -> f64 {
    psi * phi_slope(softplus(l_c), alpha) * logistic(l_c)
}

pub fn relu_penalty_objective(l_r: f64, l_c: f64, mu: f64, alpha: f64) -> f64 {
    l_r - phi(l_c.max(0.0), alpha).expect("filtered") / mu
}

/// Derivative of the ReLU penalty in `l_c` (right derivative at 0 is taken as 0).
pub fn relu_penalty_slope(l_c: f64, mu: f64, alpha: f64) -> f64 {
    if l_c > 0.0 {
        phi_slope(l_c, alpha) / mu
    } else {
        0.0
    }
}

pub fn lagrangian_objective(l_r: f64, l_c: f64, lambda_dual: f64) -> f64 {
    l_r - lambda_dual * l_c
}

/// Projected dual ascent on the constraint violation.
pub fn dual_update(lambda_dual: f64, lr: f64, jc: f64, d: f64) -> f64 {
    (lambda_dual + lr * (jc - d)).max(0.0)
}

/// Next penalty factor: geometric decay, floored at [`MU_FLOOR`].
pub fn mu_schedule(mu: f64, mu_decay: f64) -> f64 {
    (mu * mu_decay).max(MU_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ratio_examples() {
        assert_eq!(ratio(-0.3, -0.3), 1.0);
        assert!((ratio(2f64.ln(), 0.0) - 2.0).abs() < 1e-15);
        assert_eq!(ratio(1000.0, 0.0), RATIO_CEILING);
        assert!(ratio_checked(1000.0, 0.0).1);
    }

    #[test]
    fn reward_surrogate_examples() {
        let adv = [0.5, -1.0, 2.0];
        assert!((clip_surrogate_reward(&[1.0; 3], &adv, 0.2).unwrap() - 0.5).abs() < 1e-15);
        assert!((clip_surrogate_reward(&[2.0], &[1.0], 0.2).unwrap() - 1.2).abs() < 1e-15);
        assert!((clip_surrogate_reward(&[0.5], &[-1.0], 0.2).unwrap() + 0.8).abs() < 1e-15);
        assert!(clip_surrogate_reward(&[1.0], &[1.0, 2.0], 0.2).is_err());
    }

    #[test]
    fn cost_surrogate_examples() {
        assert_eq!(clip_surrogate_cost(&[1.3, 0.7], &[0.0, 0.0], 0.2, 25.0, 25.0, 0.99).unwrap(), 0.0);
        assert_eq!(clip_surrogate_cost(&[1.0], &[0.0], 0.2, 30.0, 25.0, 0.99).unwrap(), 5.0);
    }

    /// Written from the formula directly: explicit branches, no shared helper.
    fn reference_cost_surrogate(r: &[f64], a: &[f64], eps: f64, jc: f64, d: f64, gamma: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..r.len() {
            let lo = 1.0 - eps;
            let hi = 1.0 + eps;
            let rc = if r[i] < lo { lo } else if r[i] > hi { hi } else { r[i] };
            let x = r[i] * a[i];
            let y = rc * a[i];
            s += if x < y { x } else { y };
        }
        s / r.len() as f64 / (1.0 - gamma) + jc - d
    }

    proptest! {
        #[test]
        fn cost_surrogate_matches_reference(
            pairs in prop::collection::vec((0.2f64..2.0, -3.0f64..3.0), 1..50),
            eps in 0.05f64..0.5,
            jc in 0.0f64..50.0,
            gamma in 0.5f64..0.995,
        ) {
            let (r, a): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let got = clip_surrogate_cost(&r, &a, eps, jc, 25.0, gamma).unwrap();
            let want = reference_cost_surrogate(&r, &a, eps, jc, 25.0, gamma);
            prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }

        #[test]
        fn clipping_is_pessimistic(r in 0.0f64..5.0, a in -10.0f64..10.0, eps in 0.01f64..0.9) {
            prop_assert!(clipped_term(r, a, eps).0 <= r * a);
        }

        #[test]
        fn ratio_matches_exponential(a in -20.0f64..5.0, b in -6.0f64..6.0) {
            let want = (a - b).exp().min(RATIO_CEILING);
            prop_assert_eq!(ratio(a, b), want);
        }

        #[test]
        fn penalties_decrease_in_violation_and_mu(
            l_r in -5.0f64..5.0,
            l_c in 0.01f64..10.0,
            dl in 0.01f64..1.0,
            mu in 0.05f64..2.0,
            alpha in 0.0f64..=1.0,
        ) {
            // psi held at a common value so the comparison isolates the violation
            let psi = adaptive_factor(l_c, mu);
            let smooth = |lc: f64| l_r - smooth_penalty(lc, psi, alpha);
            prop_assert!(smooth(l_c + dl) < smooth(l_c));
            prop_assert!(relu_penalty_objective(l_r, l_c + dl, mu, alpha) < relu_penalty_objective(l_r, l_c, mu, alpha));
            let smaller_mu = mu * 0.5;
            prop_assert!(smooth_penalty_objective(l_r, l_c, smaller_mu, alpha).0 < smooth_penalty_objective(l_r, l_c, mu, alpha).0);
            prop_assert!(relu_penalty_objective(l_r, l_c, smaller_mu, alpha) < relu_penalty_objective(l_r, l_c, mu, alpha));
        }
    }

    #[test]
    fn smooth_penalty_examples() {
        let (obj, psi) = smooth_penalty_objective(1.5, 0.0, 1.0, 1.0);
        assert_eq!(psi, 1.0);
        assert!((obj - (1.5 - std::f64::consts::LN_2)).abs() < 1e-15);
        let (obj, _) = smooth_penalty_objective(1.5, -200.0, 1.0, 0.5);
        assert!((obj - 1.5).abs() < 1e-15);
        let (_, psi) = smooth_penalty_objective(0.0, 1e4, 1.0, 1.0);
        assert_eq!(psi, PSI_EXPONENT_CAP.exp());
    }

    #[test]
    fn smooth_slope_ignores_psi_dependence() {
        let psi = adaptive_factor(0.0, 1.0);
        let analytic = smooth_penalty_slope(0.0, psi, 1.0);
        assert!((analytic - 0.5).abs() < 1e-15);
        let h = 1e-6;
        let frozen = (smooth_penalty(h, psi, 1.0) - smooth_penalty(-h, psi, 1.0)) / (2.0 * h);
        assert!((frozen - analytic).abs() < 1e-6);
        // letting psi follow l_c would double the slope at the origin
        let live = (smooth_penalty(h, adaptive_factor(h, 1.0), 1.0)
            - smooth_penalty(-h, adaptive_factor(-h, 1.0), 1.0))
            / (2.0 * h);
        assert!((live - analytic).abs() > 0.5);
    }

    #[test]
    fn smooth_is_c1_relu_is_not() {
        let psi = 1.0;
        for alpha in [0.0, 0.5, 1.0] {
            let mut last_gap = f64::INFINITY;
            for k in 1..8 {
                let h = 10f64.powi(-k);
                let left = (smooth_penalty(0.0, psi, alpha) - smooth_penalty(-h, psi, alpha)) / h;
                let right = (smooth_penalty(h, psi, alpha) - smooth_penalty(0.0, psi, alpha)) / h;
                let gap = (right - left).abs();
                assert!(gap <= last_gap + 1e-9);
                last_gap = gap;
            }
            assert!(last_gap < 1e-5);
        }
        for (alpha, mu) in [(1.0, 1.0), (0.5, 0.25), (0.2, 2.0)] {
            let h = 1e-8;
            let left = (relu_penalty_objective(0.0, 0.0, mu, alpha) - relu_penalty_objective(0.0, -h, mu, alpha)) / h;
            let right = (relu_penalty_objective(0.0, h, mu, alpha) - relu_penalty_objective(0.0, 0.0, mu, alpha)) / h;
            assert!(((left - right) - alpha / mu).abs() < 1e-6);
        }
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu_penalty_objective(0.7, -1.0, 0.3, 0.5), 0.7);
        assert_eq!(relu_penalty_objective(0.7, 2.0, 1.0, 0.0), 0.7 - 4.0);
        assert!((relu_penalty_objective(0.7, 0.3, 0.5, 1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn lagrangian_examples() {
        assert_eq!(lagrangian_objective(1.25, 3.0, 0.0), 1.25);
        assert_eq!(dual_update(0.4, 0.1, 25.0, 25.0), 0.4);
        let mut lambda = 0.0;
        for _ in 0..10 {
            lambda = dual_update(lambda, 0.05, 31.0, 25.0);
        }
        assert!((lambda - 10.0 * 0.05 * 6.0).abs() < 1e-12);
        assert_eq!(dual_update(0.1, 1.0, 0.0, 25.0), 0.0);
    }

    #[test]
    fn mu_schedule_examples() {
        assert_eq!(mu_schedule(0.7, 1.0), 0.7);
        let mut mu = 1.0;
        for _ in 0..10 {
            mu = mu_schedule(mu, 0.9);
        }
        assert!((mu - 0.348_678_440_1).abs() < 1e-9);
        let mut mu = 1.0;
        for _ in 0..100_000 {
            mu = mu_schedule(mu, 0.5);
        }
        assert_eq!(mu, MU_FLOOR);
    }
}
