use std::collections::VecDeque;

use rand::Rng;

use super::trajectory::{Trajectory, Transition};
use crate::error::{Error, Result};
use crate::nn::Mat;

#[derive(Debug, Clone)]
struct Entry {
    transition: Transition,
    episode: u64,
}

/// Ring buffer of transitions tagged with episode ids.
///
/// Entries of one episode are stored contiguously, so a window of `k`
/// entries is a valid sub-trajectory iff its first and last entries carry
/// the same episode id.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Entry>,
    next_episode: u64,
    open: Option<u64>,
}

/// `batch` sub-trajectories of `k` steps each, laid out step-major.
///
/// `states[j]` holds `s_{t+j}` for every sample (so `states` has `k + 1`
/// entries), while `actions[j]`, `rewards[j]` etc. describe step `t + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    pub k: usize,
    pub starts: Vec<usize>,
    pub states: Vec<Mat>,
    pub actions: Vec<Mat>,
    pub rewards: Vec<Vec<f64>>,
    pub costs: Vec<Vec<f64>>,
    pub terminated: Vec<Vec<bool>>,
    pub truncated: Vec<Vec<bool>>,
    /// Externally supplied head targets, step-major like `costs`. When set
    /// they replace the bootstrapped targets (Monte-Carlo training).
    pub mc_targets: Option<McTargets>,
}

/// Per-step Monte-Carlo `(F, V_c)` targets for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct McTargets {
    pub feasibility: Vec<Vec<f64>>,
    pub cost_value: Vec<Vec<f64>>,
}

impl TransitionBatch {
    /// Packs equal-length, chained windows. `starts` is informational.
    pub fn from_windows(windows: &[&[Transition]], starts: Vec<usize>) -> Result<Self> {
        let batch = windows.len();
        let k = windows.first().map_or(0, |w| w.len());
        if batch == 0 || k == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if windows.iter().any(|w| w.len() != k) {
            return Err(Error::InvalidArgument("windows must share one length".into()));
        }
        let sd = windows[0][0].state.len();
        let ad = windows[0][0].action.len();
        let mut states = vec![Mat::zeros((batch, sd)); k + 1];
        let mut actions = vec![Mat::zeros((batch, ad)); k];
        let mut rewards = vec![vec![0.0; batch]; k];
        let mut costs = vec![vec![0.0; batch]; k];
        let mut terminated = vec![vec![false; batch]; k];
        let mut truncated = vec![vec![false; batch]; k];
        for (b, w) in windows.iter().enumerate() {
            for (j, tr) in w.iter().enumerate() {
                if tr.state.len() != sd || tr.action.len() != ad || tr.next_state.len() != sd {
                    return Err(Error::shape(format!("state {sd} / action {ad}"), "mixed dimensions"));
                }
                if j + 1 < k && (tr.next_state != w[j + 1].state || tr.ends_episode()) {
                    return Err(Error::InvalidTrajectory("window crosses an episode boundary".into()));
                }
                states[j].row_mut(b).assign(&ndarray::ArrayView1::from(&tr.state[..]));
                actions[j].row_mut(b).assign(&ndarray::ArrayView1::from(&tr.action[..]));
                rewards[j][b] = tr.reward;
                costs[j][b] = tr.cost.value();
                terminated[j][b] = tr.done;
                truncated[j][b] = tr.truncated;
            }
            states[k].row_mut(b).assign(&ndarray::ArrayView1::from(&w[k - 1].next_state[..]));
        }
        Ok(Self {
            k,
            starts,
            states,
            actions,
            rewards,
            costs,
            terminated,
            truncated,
            mc_targets: None,
        })
    }

    pub fn len(&self) -> usize {
        self.starts.len().max(self.states.first().map_or(0, |m| m.nrows()))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Single-step view of step `j` (a `k = 1` batch).
    pub fn step(&self, j: usize) -> TransitionBatch {
        TransitionBatch {
            k: 1,
            starts: self.starts.iter().map(|s| s + j).collect(),
            states: vec![self.states[j].clone(), self.states[j + 1].clone()],
            actions: vec![self.actions[j].clone()],
            rewards: vec![self.rewards[j].clone()],
            costs: vec![self.costs[j].clone()],
            terminated: vec![self.terminated[j].clone()],
            truncated: vec![self.truncated[j].clone()],
            mc_targets: self.mc_targets.as_ref().map(|m| McTargets {
                feasibility: vec![m.feasibility[j].clone()],
                cost_value: vec![m.cost_value[j].clone()],
            }),
        }
    }
}

const REJECTION_ATTEMPTS: usize = 64;

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 20)),
            next_episode: 0,
            open: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.entries.get(index).map(|e| &e.transition)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter().map(|e| &e.transition)
    }

    fn append(&mut self, transition: Transition, episode: u64) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(Entry { transition, episode });
    }

    fn close_open(&mut self) {
        if self.open.take().is_some() {
            self.next_episode += 1;
        }
    }

    /// Appends a whole episode, evicting the oldest entries past capacity.
    /// An episode being streamed with [`push_step`](Self::push_step) is closed first.
    pub fn push_episode(&mut self, traj: &Trajectory) -> Result<()> {
        self.close_open();
        let id = self.next_episode;
        for tr in traj.transitions() {
            self.append(tr.clone(), id);
        }
        self.next_episode += 1;
        Ok(())
    }

    /// Validates raw records as one episode, then appends them.
    pub fn push_records(&mut self, records: Vec<Transition>) -> Result<()> {
        let traj = Trajectory::new(records)?;
        self.push_episode(&traj)
    }

    /// Streams one transition into the currently open episode.
    pub fn push_step(&mut self, transition: Transition) -> Result<()> {
        if let Some(id) = self.open {
            let last = &self.entries.back().expect("open episode has entries").transition;
            if last.next_state != transition.state {
                return Err(Error::InvalidTrajectory(
                    "streamed transition does not continue the open episode".into(),
                ));
            }
            let ends = transition.ends_episode();
            self.append(transition, id);
            if ends {
                self.close_open();
            }
        } else {
            let id = self.next_episode;
            let ends = transition.ends_episode();
            self.append(transition, id);
            if ends {
                self.next_episode += 1;
            } else {
                self.open = Some(id);
            }
        }
        Ok(())
    }

    fn window_ok(&self, start: usize, k: usize) -> bool {
        start + k <= self.entries.len() && self.entries[start].episode == self.entries[start + k - 1].episode
    }

    /// Every start index whose `k`-window stays inside one episode.
    pub fn valid_starts(&self, k: usize) -> Vec<usize> {
        if k == 0 || self.entries.len() < k {
            return Vec::new();
        }
        (0..=self.entries.len() - k).filter(|&i| self.window_ok(i, k)).collect()
    }

    /// Samples `batch` windows uniformly over valid start indices.
    pub fn sample_subtrajectories<R: Rng + ?Sized>(&self, batch: usize, k: usize, rng: &mut R) -> Result<TransitionBatch> {
        if batch == 0 || k == 0 {
            return Err(Error::InvalidArgument("batch and k must be positive".into()));
        }
        let len = self.entries.len();
        if len < k {
            return Err(Error::NoValidStart { k, len });
        }
        let span = len - k + 1;
        let mut fallback: Option<Vec<usize>> = None;
        let mut starts = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mut chosen = None;
            if fallback.is_none() {
                for _ in 0..REJECTION_ATTEMPTS {
                    let i = rng.random_range(0..span);
                    if self.window_ok(i, k) {
                        chosen = Some(i);
                        break;
                    }
                }
            }
            let start = match chosen {
                Some(i) => i,
                None => {
                    let valid = fallback.get_or_insert_with(|| self.valid_starts(k));
                    if valid.is_empty() {
                        return Err(Error::NoValidStart { k, len });
                    }
                    valid[rng.random_range(0..valid.len())]
                }
            };
            starts.push(start);
        }
        let windows: Vec<Vec<Transition>> = starts
            .iter()
            .map(|&s| (s..s + k).map(|i| self.entries[i].transition.clone()).collect())
            .collect();
        let views: Vec<&[Transition]> = windows.iter().map(Vec::as_slice).collect();
        TransitionBatch::from_windows(&views, starts)
    }
}

#[cfg(test)]
mod tests {
    use super::super::trajectory::test_support::chain;
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn push_counts_and_evicts_oldest() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        buf.push_episode(&chain(10, &[], 0.0)).unwrap();
        assert_eq!(buf.len(), 10);
        buf.push_episode(&chain(3, &[], 100.0)).unwrap();
        assert_eq!(buf.len(), 10);
        // states 0, 1, 2 evicted
        assert_eq!(buf.get(0).unwrap().state, vec![3.0]);
    }

    #[test]
    fn starts_stay_in_range_for_single_episode() {
        let mut buf = ReplayBuffer::new(100).unwrap();
        buf.push_episode(&chain(10, &[], 0.0)).unwrap();
        assert_eq!(buf.valid_starts(4), (0..=6).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = buf.sample_subtrajectories(200, 4, &mut rng).unwrap();
        assert!(b.starts.iter().all(|&s| s <= 6));
        assert_eq!(b.states.len(), 5);
    }

    #[test]
    fn k_one_is_plain_sampling() {
        let mut buf = ReplayBuffer::new(100).unwrap();
        buf.push_episode(&chain(5, &[], 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = buf.sample_subtrajectories(50, 1, &mut rng).unwrap();
        assert!(b.starts.iter().all(|&s| s < 5));
        for (i, &s) in b.starts.iter().enumerate() {
            assert_eq!(b.states[0][[i, 0]], s as f64);
            assert_eq!(b.states[1][[i, 0]], s as f64 + 1.0);
        }
    }

    #[test]
    fn short_episodes_are_excluded() {
        let mut buf = ReplayBuffer::new(100).unwrap();
        buf.push_episode(&chain(3, &[], 0.0)).unwrap();
        buf.push_episode(&chain(5, &[], 10.0)).unwrap();
        // the length-5 episode occupies buffer slots 3..8
        assert_eq!(buf.valid_starts(4), vec![3, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = buf.sample_subtrajectories(100, 4, &mut rng).unwrap();
        assert!(b.starts.iter().all(|s| [3, 4].contains(s)));
        // in-episode offsets {0, 1}
        assert!(b.states[0].column(0).iter().all(|&x| x == 10.0 || x == 11.0));
    }

    #[test]
    fn no_valid_start_is_an_error() {
        let mut buf = ReplayBuffer::new(100).unwrap();
        assert!(matches!(
            buf.sample_subtrajectories(1, 1, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::NoValidStart { .. })
        ));
        buf.push_episode(&chain(2, &[], 0.0)).unwrap();
        buf.push_episode(&chain(3, &[], 5.0)).unwrap();
        assert!(matches!(
            buf.sample_subtrajectories(1, 4, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::NoValidStart { .. })
        ));
    }

    #[test]
    fn mismatched_records_rejected() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        let mut ts = chain(3, &[], 0.0).into_transitions();
        ts[0].next_state = vec![9.0];
        assert!(matches!(buf.push_records(ts), Err(Error::InvalidTrajectory(_))));
        assert!(buf.is_empty());
    }

    #[test]
    fn streamed_steps_must_chain() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        let ts = chain(3, &[], 0.0).into_transitions();
        buf.push_step(ts[0].clone()).unwrap();
        assert!(buf.push_step(ts[2].clone()).is_err());
        buf.push_step(ts[1].clone()).unwrap();
        buf.push_step(ts[2].clone()).unwrap();
        assert_eq!(buf.valid_starts(3), vec![0]);
    }

    proptest! {
        #[test]
        fn windows_never_cross_boundaries(
            lengths in prop::collection::vec(1usize..12, 1..8),
            capacity in 5usize..60,
            k in 1usize..6,
            seed in any::<u64>(),
        ) {
            let mut buf = ReplayBuffer::new(capacity).unwrap();
            for (e, &len) in lengths.iter().enumerate() {
                buf.push_episode(&chain(len, &[], 1000.0 * e as f64)).unwrap();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match buf.sample_subtrajectories(16, k, &mut rng) {
                Ok(b) => {
                    for i in 0..16 {
                        for j in 0..k {
                            // unit-increment chain within an episode
                            prop_assert_eq!(b.states[j + 1][[i, 0]], b.states[j][[i, 0]] + 1.0);
                            prop_assert!(j + 1 == k || !b.terminated[j][i]);
                        }
                    }
                    let again = buf.sample_subtrajectories(16, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                    prop_assert_eq!(again, b);
                }
                Err(Error::NoValidStart { .. }) => prop_assert!(buf.valid_starts(k).is_empty()),
                Err(e) => prop_assert!(false, "unexpected error {}", e),
            }
        }
    }
}
