use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::Environment;
use crate::cmdp::{Cost, Transition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disc {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.distance(p) <= self.radius
    }

    pub fn distance(&self, p: [f64; 2]) -> f64 {
        ((p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2)).sqrt()
    }
}

/// Point mass in a square arena `[-half_width, half_width]^2`.
///
/// State is `(x, y, vx, vy)`; the action is a 2D acceleration clipped to the
/// unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointHazard2DEnv {
    pub half_width: f64,
    pub hazards: Vec<Disc>,
    pub goal: Disc,
    pub dt: f64,
    pub damping: f64,
    pub accel: f64,
    pub max_steps: usize,
    pub start_center: [f64; 2],
    /// Start positions are uniform in a box of this half-width around `start_center`.
    pub start_spread: f64,
    pub goal_bonus: f64,
}

impl Default for PointHazard2DEnv {
    /// One hazard between the start corner and the goal corner.
    fn default() -> Self {
        Self {
            half_width: 1.5,
            hazards: vec![Disc {
                center: [0.0, 0.0],
                radius: 0.6,
            }],
            goal: Disc {
                center: [1.0, 1.0],
                radius: 0.3,
            },
            dt: 0.1,
            damping: 0.85,
            accel: 1.0,
            max_steps: 150,
            start_center: [-1.0, -1.0],
            start_spread: 0.2,
            goal_bonus: 1.0,
        }
    }
}

impl PointHazard2DEnv {
    pub fn validate(&self) -> Result<()> {
        let inside = |d: &Disc| d.center.iter().all(|c| c.abs() + d.radius <= self.half_width) && d.radius > 0.0;
        if !(self.half_width > 0.0) {
            return Err(Error::InvalidArgument("half_width must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.damping) || !(self.accel > 0.0) {
            return Err(Error::InvalidArgument("damping must be in [0, 1] and accel positive".into()));
        }
        if !self.hazards.iter().all(inside) || !inside(&self.goal) {
            return Err(Error::InvalidArgument("hazards and goal must lie inside the arena".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        let s = self.start_center;
        if s.iter().any(|c| c.abs() + self.start_spread > self.half_width) || self.start_spread < 0.0 {
            return Err(Error::InvalidArgument("start region must lie inside the arena".into()));
        }
        Ok(())
    }

    /// Full-thrust action from the state's position toward the goal center.
    pub fn goal_direction(&self, state: &[f64]) -> [f64; 2] {
        let d = [self.goal.center[0] - state[0], self.goal.center[1] - state[1]];
        let m = d[0].abs().max(d[1].abs());
        if m == 0.0 {
            [0.0, 0.0]
        } else {
            [d[0] / m, d[1] / m]
        }
    }

    pub fn in_hazard(&self, p: [f64; 2]) -> bool {
        self.hazards.iter().any(|h| h.contains(p))
    }

    /// Deterministic dynamics step.
    pub fn point_step(&self, state: &[f64], action: &[f64]) -> Result<Transition> {
        if state.len() != 4 {
            return Err(Error::shape(4, state.len()));
        }
        if action.len() != 2 {
            return Err(Error::shape(2, action.len()));
        }
        if state.iter().chain(action).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point env state/action".into()));
        }
        let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        let p = [state[0], state[1]];
        let mut next = [0.0; 4];
        for i in 0..2 {
            let v = self.damping * state[2 + i] + self.accel * a[i] * self.dt;
            let x = (p[i] + v * self.dt).clamp(-self.half_width, self.half_width);
            // Hitting the wall kills the velocity component into it.
            let v = if x.abs() == self.half_width { 0.0 } else { v };
            next[i] = x;
            next[2 + i] = v;
        }
        let q = [next[0], next[1]];
        let reached = self.goal.contains(q);
        let mut reward = self.goal.distance(p) - self.goal.distance(q);
        if reached {
            reward += self.goal_bonus;
        }
        Ok(Transition {
            state: state.to_vec(),
            action: a.to_vec(),
            reward,
            cost: Cost::from(self.in_hazard(q)),
            next_state: next.to_vec(),
            done: reached,
            truncated: false,
        })
    }
}

impl Environment for PointHazard2DEnv {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn reset(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let s = self.start_spread;
        let jitter = |rng: &mut dyn RngCore| if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
        let x = self.start_center[0] + jitter(rng);
        let y = self.start_center[1] + jitter(rng);
        vec![x, y, 0.0, 0.0]
    }

    fn step(&self, state: &[f64], action: &[f64]) -> Result<Transition> {
        self.point_step(state, action)
    }
}
