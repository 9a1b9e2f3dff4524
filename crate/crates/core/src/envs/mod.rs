//! Desk-scale environments: a finite hazard gridworld and a continuous
//! point-mass navigation task.

mod grid;
mod point;

use rand::RngCore;

pub use grid::{GridAction, GridHazardEnv, GRID_ACTIONS};
pub use point::{Disc, PointHazard2DEnv};

use crate::cmdp::{Trajectory, Transition};
use crate::error::Result;

/// Continuous-action environment driven by the training loop.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn max_steps(&self) -> usize;
    fn reset(&self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn step(&self, state: &[f64], action: &[f64]) -> Result<Transition>;
}

/// Runs one episode, marking the last record `truncated` on a time-out.
pub fn run_episode<E, P>(env: &E, mut policy: P, rng: &mut dyn RngCore) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    P: FnMut(&[f64], &mut dyn RngCore) -> Result<Vec<f64>>,
{
    let mut state = env.reset(rng);
    let mut records = Vec::with_capacity(env.max_steps());
    for t in 0..env.max_steps() {
        let action = policy(&state, rng)?;
        let mut tr = env.step(&state, &action)?;
        if !tr.done && t + 1 == env.max_steps() {
            tr.truncated = true;
        }
        state = tr.next_state.clone();
        let stop = tr.done;
        records.push(tr);
        if stop {
            break;
        }
    }
    Trajectory::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn episodes_end_by_goal_or_truncation() {
        let env = PointHazard2DEnv::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tr = run_episode(&env, |_, r| Ok(vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]), &mut rng).unwrap();
        let last = tr.transitions().last().unwrap();
        assert!(last.done || (last.truncated && tr.len() == env.max_steps));
    }

    #[test]
    fn greedy_straight_line_crosses_the_hazard() {
        let env = PointHazard2DEnv::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = run_episode(&env, |_, _| Ok(vec![1.0, 1.0]), &mut rng).unwrap();
        assert!(tr.transitions().last().unwrap().done);
        assert!(tr.episode_return_c() > 10.0, "cost {}", tr.episode_return_c());
    }
}
