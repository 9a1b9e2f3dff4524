use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PID controller driving the Lagrange multiplier from constraint
/// violations `e = J_c - epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    pub previous_error: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidState {
    fn default() -> Self {
        Self::new(0.02, 0.005, 0.01).expect("valid gains")
    }
}

impl PidState {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Result<Self> {
        if [kp, ki, kd].iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::Config(format!("PID gains must be finite and >= 0, got ({kp}, {ki}, {kd})")));
        }
        Ok(Self {
            integral: 0.0,
            previous_error: 0.0,
            kp,
            ki,
            kd,
        })
    }

    pub fn gains(&self) -> [f64; 3] {
        [self.kp, self.ki, self.kd]
    }

    /// Feeds one episode cost and returns the new (non-negative) multiplier.
    pub fn update(&mut self, episode_cost: f64, epsilon: f64) -> f64 {
        let e = episode_cost - epsilon;
        self.integral = (self.integral + e).max(0.0);
        let lambda = (self.kp * e + self.ki * self.integral + self.kd * (e - self.previous_error)).max(0.0);
        self.previous_error = e;
        lambda
    }
}

/// Functional form of [`PidState::update`].
pub fn pid_update(pid: &mut PidState, episode_cost: f64, epsilon: f64) -> f64 {
    pid.update(episode_cost, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn on_threshold_from_rest_is_zero() {
        let mut p = PidState::default();
        assert_eq!(p.update(10.0, 10.0), 0.0);
    }

    #[test]
    fn hand_evaluated_step() {
        let mut p = PidState::default();
        let l = p.update(20.0, 10.0);
        assert!((l - 0.35).abs() < 1e-15);
        assert_eq!(p.integral, 10.0);
        assert_eq!(p.previous_error, 10.0);
    }

    #[test]
    fn violation_gives_positive_multiplier() {
        let mut p = PidState::default();
        assert!(p.update(10.5, 10.0) > 0.0);
    }

    #[test]
    fn negative_gain_rejected() {
        assert!(PidState::new(0.1, -1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn multiplier_and_integral_stay_nonnegative(costs in proptest::collection::vec(0.0f64..60.0, 1..50)) {
            let mut p = PidState::default();
            for c in costs {
                let l = p.update(c, 10.0);
                prop_assert!(l >= 0.0);
                prop_assert!(p.integral >= 0.0);
            }
        }
    }
}
