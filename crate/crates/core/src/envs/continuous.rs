use rand::Rng;
use serde::{Deserialize, Serialize};

use super::StepResult;
use crate::error::{Error, Result};

/// Per-step velocity retention of both continuous tasks.
pub const VELOCITY_DAMPING: f64 = 0.95;
/// Bonus for entering the goal disc in the point task.
pub const GOAL_BONUS: f64 = 10.0;
const MAX_RESET_TRIES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousKind {
    PointHazard,
    Velocity1d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousEnvConfig {
    pub kind: ContinuousKind,
    pub arena_halfwidth: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub hazard_centers: Vec<[f64; 2]>,
    pub hazard_radius: f64,
    pub velocity_limit: f64,
    pub max_force: f64,
    pub dt: f64,
    pub horizon: usize,
    pub cost_limit: f64,
}

/// Mutable physical state; the 1-D task only uses the first components.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContinuousState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub t: usize,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl ContinuousEnvConfig {
    /// Point navigation with `n_hazards` hazards and a goal placed from `layout_rng`.
    /// The layout is fixed for the lifetime of the config.
    pub fn point_hazard<R: Rng + ?Sized>(n_hazards: usize, layout_rng: &mut R) -> Result<Self> {
        let arena_halfwidth = 2.0;
        let goal_radius = 0.3;
        let hazard_radius = 0.4;
        let inner = arena_halfwidth - 0.5;
        let goal = [layout_rng.gen_range(-inner..inner), layout_rng.gen_range(-inner..inner)];
        let mut hazard_centers: Vec<[f64; 2]> = Vec::with_capacity(n_hazards);
        let mut tries = 0;
        while hazard_centers.len() < n_hazards {
            tries += 1;
            if tries > MAX_RESET_TRIES {
                return Err(Error::Config("could not place hazards in the arena".into()));
            }
            let c = [layout_rng.gen_range(-inner..inner), layout_rng.gen_range(-inner..inner)];
            if dist(c, goal) < goal_radius + hazard_radius + 0.2 {
                continue;
            }
            if hazard_centers.iter().any(|h| dist(*h, c) < 2.0 * hazard_radius) {
                continue;
            }
            hazard_centers.push(c);
        }
        let cfg = Self {
            kind: ContinuousKind::PointHazard,
            arena_halfwidth,
            goal,
            goal_radius,
            hazard_centers,
            hazard_radius,
            velocity_limit: 0.0,
            max_force: 1.0,
            dt: 0.1,
            horizon: 200,
            cost_limit: 5.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn velocity_1d() -> Self {
        Self {
            kind: ContinuousKind::Velocity1d,
            arena_halfwidth: 0.0,
            goal: [0.0, 0.0],
            goal_radius: 0.0,
            hazard_centers: Vec::new(),
            hazard_radius: 0.0,
            velocity_limit: 0.5,
            max_force: 1.0,
            dt: 0.05,
            horizon: 1000,
            cost_limit: 25.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.max_force > 0.0) {
            return Err(Error::Config("max_force must be positive".into()));
        }
        if self.kind == ContinuousKind::PointHazard {
            let w = self.arena_halfwidth;
            let inside = |p: [f64; 2]| p[0].abs() <= w && p[1].abs() <= w;
            if !inside(self.goal) || !self.hazard_centers.iter().all(|h| inside(*h)) {
                return Err(Error::Config("goal and hazards must lie inside the arena".into()));
            }
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        match self.kind {
            ContinuousKind::PointHazard => 4 + 2 * self.hazard_centers.len(),
            ContinuousKind::Velocity1d => 2,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.kind {
            ContinuousKind::PointHazard => 2,
            ContinuousKind::Velocity1d => 1,
        }
    }

    fn in_hazard(&self, p: [f64; 2]) -> bool {
        self.hazard_centers.iter().any(|h| dist(*h, p) <= self.hazard_radius)
    }

    pub fn observe(&self, state: &ContinuousState) -> Vec<f64> {
        match self.kind {
            ContinuousKind::PointHazard => {
                let p = state.position;
                let mut obs = vec![
                    state.velocity[0],
                    state.velocity[1],
                    self.goal[0] - p[0],
                    self.goal[1] - p[1],
                ];
                for h in &self.hazard_centers {
                    obs.push(h[0] - p[0]);
                    obs.push(h[1] - p[1]);
                }
                obs
            }
            ContinuousKind::Velocity1d => vec![state.position[0], state.velocity[0]],
        }
    }
}

pub fn continuous_reset<R: Rng + ?Sized>(
    config: &ContinuousEnvConfig,
    rng: &mut R,
) -> Result<(ContinuousState, Vec<f64>)> {
    let state = match config.kind {
        ContinuousKind::Velocity1d => ContinuousState::default(),
        ContinuousKind::PointHazard => {
            let w = config.arena_halfwidth;
            let mut found = None;
            for _ in 0..MAX_RESET_TRIES {
                let p = [rng.gen_range(-w..w), rng.gen_range(-w..w)];
                if !config.in_hazard(p) && dist(p, config.goal) > config.goal_radius {
                    found = Some(p);
                    break;
                }
            }
            let position = found.ok_or_else(|| {
                Error::Config("no free start position after 1000 draws; arena over-crowded".into())
            })?;
            ContinuousState {
                position,
                ..ContinuousState::default()
            }
        }
    };
    let obs = config.observe(&state);
    Ok((state, obs))
}

pub fn continuous_step(
    config: &ContinuousEnvConfig,
    state: &mut ContinuousState,
    action: &[f64],
) -> Result<StepResult> {
    if action.len() != config.action_dim() {
        return Err(Error::Usage(format!(
            "action has {} entries, task expects {}",
            action.len(),
            config.action_dim()
        )));
    }
    if let Some(bad) = action.iter().find(|a| !a.is_finite()) {
        return Err(Error::numeric("continuous action", *bad));
    }
    let clip = |a: f64| a.clamp(-config.max_force, config.max_force);
    state.t += 1;
    let horizon_hit = state.t >= config.horizon;
    match config.kind {
        ContinuousKind::Velocity1d => {
            let v = VELOCITY_DAMPING * state.velocity[0] + config.dt * clip(action[0]);
            state.velocity[0] = v;
            state.position[0] += config.dt * v;
            Ok(StepResult {
                next_observation: config.observe(state),
                reward: v * config.dt,
                cost: if v > config.velocity_limit { 1.0 } else { 0.0 },
                done: horizon_hit,
                truncated: horizon_hit,
            })
        }
        ContinuousKind::PointHazard => {
            let before = dist(state.position, config.goal);
            let w = config.arena_halfwidth;
            for k in 0..2 {
                let v = VELOCITY_DAMPING * state.velocity[k] + config.dt * clip(action[k]);
                let p = state.position[k] + config.dt * v;
                if p.abs() > w {
                    state.position[k] = p.clamp(-w, w);
                    state.velocity[k] = 0.0;
                } else {
                    state.position[k] = p;
                    state.velocity[k] = v;
                }
            }
            let after = dist(state.position, config.goal);
            let reached = after <= config.goal_radius;
            let mut reward = before - after;
            if reached {
                reward += GOAL_BONUS;
            }
            Ok(StepResult {
                next_observation: config.observe(state),
                reward,
                cost: if config.in_hazard(state.position) { 1.0 } else { 0.0 },
                done: reached || horizon_hit,
                truncated: horizon_hit && !reached,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn point(n: usize, seed: u64) -> ContinuousEnvConfig {
        ContinuousEnvConfig::point_hazard(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn observation_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(continuous_reset(&point(0, 1), &mut rng).unwrap().1.len(), 4);
        assert_eq!(continuous_reset(&point(3, 1), &mut rng).unwrap().1.len(), 10);
        let v = ContinuousEnvConfig::velocity_1d();
        assert_eq!(continuous_reset(&v, &mut rng).unwrap().1, vec![0.0, 0.0]);
    }

    #[test]
    fn resets_avoid_hazards() {
        let cfg = point(4, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let (s, _) = continuous_reset(&cfg, &mut rng).unwrap();
            assert!(!cfg.in_hazard(s.position));
            assert!(dist(s.position, cfg.goal) > cfg.goal_radius);
        }
    }

    #[test]
    fn crowded_arena_fails_to_reset() {
        let mut cfg = point(0, 1);
        cfg.hazard_centers = vec![[0.0, 0.0]];
        cfg.hazard_radius = 10.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(continuous_reset(&cfg, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn zero_action_from_rest_stays_put() {
        let cfg = point(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut s, _) = continuous_reset(&cfg, &mut rng).unwrap();
        let before = s.position;
        let r = continuous_step(&cfg, &mut s, &[0.0, 0.0]).unwrap();
        assert_eq!(s.position, before);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn velocity_indicator_cost() {
        let cfg = ContinuousEnvConfig::velocity_1d();
        let mut s = ContinuousState {
            velocity: [cfg.velocity_limit + 0.2, 0.0],
            ..Default::default()
        };
        let r = continuous_step(&cfg, &mut s, &[1.0]).unwrap();
        assert!(s.velocity[0] > cfg.velocity_limit);
        assert_eq!(r.cost, 1.0);
        let mut s = ContinuousState::default();
        assert_eq!(continuous_step(&cfg, &mut s, &[0.0]).unwrap().cost, 0.0);
    }

    #[test]
    fn constant_force_reaches_fixed_point() {
        let cfg = ContinuousEnvConfig::velocity_1d();
        let mut s = ContinuousState::default();
        for _ in 0..500 {
            continuous_step(&cfg, &mut s, &[cfg.max_force * 3.0]).unwrap();
        }
        let fixed = cfg.dt * cfg.max_force / (1.0 - VELOCITY_DAMPING);
        assert!((s.velocity[0] - fixed).abs() < 1e-6);
    }

    #[test]
    fn episodes_end_at_horizon() {
        let mut cfg = ContinuousEnvConfig::velocity_1d();
        cfg.horizon = 5;
        let mut s = ContinuousState::default();
        let flags: Vec<bool> = (0..5)
            .map(|_| continuous_step(&cfg, &mut s, &[0.1]).unwrap().done)
            .collect();
        assert_eq!(flags, vec![false, false, false, false, true]);
    }

    #[test]
    fn non_finite_action_rejected() {
        let cfg = ContinuousEnvConfig::velocity_1d();
        let mut s = ContinuousState::default();
        assert!(matches!(
            continuous_step(&cfg, &mut s, &[f64::NAN]),
            Err(Error::Numeric { .. })
        ));
    }
}
