use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary safety signal attached to a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cost {
    Safe,
    Unsafe,
}

impl Cost {
    pub fn value(self) -> f64 {
        match self {
            Cost::Safe => 0.0,
            Cost::Unsafe => 1.0,
        }
    }

    pub fn from_f64(v: f64) -> Result<Self> {
        if v == 0.0 {
            Ok(Cost::Safe)
        } else if v == 1.0 {
            Ok(Cost::Unsafe)
        } else {
            Err(Error::InvalidArgument(format!("cost must be 0 or 1, got {v}")))
        }
    }

    pub fn is_unsafe(self) -> bool {
        self == Cost::Unsafe
    }
}

impl From<bool> for Cost {
    fn from(unsafe_: bool) -> Self {
        if unsafe_ {
            Cost::Unsafe
        } else {
            Cost::Safe
        }
    }
}

/// One `(s, a, r, c, s', done)` record.
///
/// `done` marks true termination (no bootstrap). `truncated` marks a time
/// limit: the episode stops but value targets still bootstrap through `s'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub cost: Cost,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub truncated: bool,
}

impl Transition {
    pub fn ends_episode(&self) -> bool {
        self.done || self.truncated
    }
}

/// An ordered, chained episode (or episode prefix).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    transitions: Vec<Transition>,
    episode_return_r: f64,
    episode_return_c: f64,
}

impl Trajectory {
    /// Validates chaining (`next_state[t] == state[t+1]`) and that only the
    /// final record may end the episode.
    pub fn new(transitions: Vec<Transition>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::InvalidTrajectory("empty trajectory".into()));
        }
        for (t, pair) in transitions.windows(2).enumerate() {
            if pair[0].next_state != pair[1].state {
                return Err(Error::InvalidTrajectory(format!(
                    "next_state of record {t} does not match state of record {}",
                    t + 1
                )));
            }
            if pair[0].ends_episode() {
                return Err(Error::InvalidTrajectory(format!("record {t} ends the episode but is not last")));
            }
        }
        let dims = (transitions[0].state.len(), transitions[0].action.len());
        for (t, tr) in transitions.iter().enumerate() {
            if tr.state.len() != dims.0 || tr.next_state.len() != dims.0 || tr.action.len() != dims.1 {
                return Err(Error::InvalidTrajectory(format!("record {t} has inconsistent dimensions")));
            }
            let finite = tr.state.iter().chain(&tr.action).chain(&tr.next_state).all(|v| v.is_finite())
                && tr.reward.is_finite();
            if !finite {
                return Err(Error::InvalidTrajectory(format!("record {t} has non-finite entries")));
            }
        }
        let episode_return_r = transitions.iter().map(|t| t.reward).sum();
        let episode_return_c = transitions.iter().map(|t| t.cost.value()).sum();
        Ok(Self {
            transitions,
            episode_return_r,
            episode_return_c,
        })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn into_transitions(self) -> Vec<Transition> {
        self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Undiscounted reward sum.
    pub fn episode_return_r(&self) -> f64 {
        self.episode_return_r
    }

    /// Undiscounted cost sum.
    pub fn episode_return_c(&self) -> f64 {
        self.episode_return_c
    }

    pub fn costs(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.cost.value()).collect()
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Scalar-state chain `0 -> 1 -> ... -> len` with the given costs.
    pub fn chain(len: usize, costs: &[bool], offset: f64) -> Trajectory {
        let transitions = (0..len)
            .map(|t| Transition {
                state: vec![offset + t as f64],
                action: vec![0.0],
                reward: 1.0,
                cost: Cost::from(costs.get(t).copied().unwrap_or(false)),
                next_state: vec![offset + t as f64 + 1.0],
                done: t + 1 == len,
                truncated: false,
            })
            .collect();
        Trajectory::new(transitions).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::chain;
    use super::*;

    #[test]
    fn returns_are_undiscounted_sums() {
        let tr = chain(4, &[false, true, true, false], 0.0);
        assert_eq!(tr.episode_return_r(), 4.0);
        assert_eq!(tr.episode_return_c(), 2.0);
    }

    #[test]
    fn broken_chain_is_rejected() {
        let mut ts = chain(3, &[], 0.0).into_transitions();
        ts[0].next_state = vec![42.0];
        let err = Trajectory::new(ts).unwrap_err();
        assert!(err.to_string().contains("record 0"), "{err}");
    }

    #[test]
    fn cost_parsing_is_strict() {
        assert_eq!(Cost::from_f64(1.0).unwrap(), Cost::Unsafe);
        assert!(Cost::from_f64(0.3).is_err());
    }
}
