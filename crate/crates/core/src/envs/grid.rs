use std::fmt::Write as _;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::cmdp::{CmdpSpec, Cost, FiniteMdp, Trajectory, Transition};
use crate::error::{Error, Result};

pub const GRID_ACTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridAction {
    Up,
    Down,
    Left,
    Right,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::Up, GridAction::Down, GridAction::Left, GridAction::Right];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or(Error::IndexOutOfRange { index: i, len: 4 })
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn delta(self) -> (i64, i64) {
        match self {
            GridAction::Up => (0, -1),
            GridAction::Down => (0, 1),
            GridAction::Left => (-1, 0),
            GridAction::Right => (1, 0),
        }
    }

    fn perpendicular(self) -> [GridAction; 2] {
        match self {
            GridAction::Up | GridAction::Down => [GridAction::Left, GridAction::Right],
            GridAction::Left | GridAction::Right => [GridAction::Up, GridAction::Down],
        }
    }
}

/// Hazard gridworld. Cells are indexed row-major, `cell = y * width + x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridHazardEnv {
    pub width: usize,
    pub height: usize,
    pub hazards: Vec<usize>,
    pub goal: usize,
    pub slip_prob: f64,
    /// Start distribution over cells.
    pub start: Vec<f64>,
    pub max_steps: usize,
    #[serde(default = "default_step_penalty")]
    pub step_penalty: f64,
}

fn default_step_penalty() -> f64 {
    0.01
}

impl Default for GridHazardEnv {
    fn default() -> Self {
        Self::six_by_six()
    }
}

impl GridHazardEnv {
    pub fn new(
        width: usize,
        height: usize,
        hazards: Vec<usize>,
        goal: usize,
        slip_prob: f64,
        start: Vec<f64>,
        max_steps: usize,
    ) -> Result<Self> {
        let env = Self {
            width,
            height,
            hazards,
            goal,
            slip_prob,
            start,
            max_steps,
            step_penalty: default_step_penalty(),
        };
        env.validate()?;
        Ok(env)
    }

    /// A 6x6 layout with four hazards, goal in the bottom-right corner and a
    /// uniform start over the safe non-goal cells.
    pub fn six_by_six() -> Self {
        let (w, h) = (6, 6);
        let hazards = vec![2 * w + 2, 2 * w + 3, 3 * w + 3, 4 * w + 1];
        let goal = w * h - 1;
        let mut start = vec![0.0; w * h];
        let n_start = w * h - hazards.len() - 1;
        for (c, p) in start.iter_mut().enumerate() {
            if c != goal && !hazards.contains(&c) {
                *p = 1.0 / n_start as f64;
            }
        }
        Self::new(w, h, hazards, goal, 0.0, start, 50).expect("valid built-in layout")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_cells();
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("grid must be non-empty".into()));
        }
        if self.goal >= n || self.hazards.iter().any(|&c| c >= n) {
            return Err(Error::InvalidArgument("cell index out of range".into()));
        }
        if self.hazards.contains(&self.goal) {
            return Err(Error::InvalidArgument("goal cell cannot be a hazard".into()));
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(Error::InvalidArgument(format!("slip_prob must be in [0, 1), got {}", self.slip_prob)));
        }
        let mass: f64 = self.start.iter().sum();
        if self.start.len() != n || self.start.iter().any(|&p| p < 0.0) || (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("start must be a distribution over cells".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn is_hazard(&self, cell: usize) -> bool {
        self.hazards.contains(&cell)
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.width, cell / self.width)
    }

    pub fn one_hot(&self, cell: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_cells()];
        v[cell] = 1.0;
        v
    }

    /// Recovers the cell from a one-hot state vector.
    pub fn cell_of(&self, state: &[f64]) -> Result<usize> {
        if state.len() != self.n_cells() {
            return Err(Error::shape(self.n_cells(), state.len()));
        }
        state
            .iter()
            .position(|&v| v == 1.0)
            .ok_or_else(|| Error::InvalidArgument("state is not one-hot".into()))
    }

    fn moved(&self, cell: usize, action: GridAction) -> usize {
        let (x, y) = self.coords(cell);
        let (dx, dy) = action.delta();
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            cell
        } else {
            ny as usize * self.width + nx as usize
        }
    }

    /// Successor distribution `(cell, probability)` for `(cell, action)`.
    pub fn successors(&self, cell: usize, action: GridAction) -> Vec<(usize, f64)> {
        let mut out = vec![(self.moved(cell, action), 1.0 - self.slip_prob)];
        if self.slip_prob > 0.0 {
            for p in action.perpendicular() {
                out.push((self.moved(cell, p), self.slip_prob / 2.0));
            }
        }
        out
    }

    fn check_cell(&self, cell: usize) -> Result<()> {
        if cell >= self.n_cells() {
            return Err(Error::IndexOutOfRange {
                index: cell,
                len: self.n_cells(),
            });
        }
        Ok(())
    }

    /// One environment step from `cell`; states and actions come back one-hot.
    pub fn grid_step(&self, cell: usize, action: usize, rng: &mut dyn RngCore) -> Result<Transition> {
        self.check_cell(cell)?;
        let a = GridAction::from_index(action)?;
        let mut chosen = a;
        if self.slip_prob > 0.0 && rng.random::<f64>() < self.slip_prob {
            let perp = a.perpendicular();
            chosen = perp[rng.random_range(0..2)];
        }
        let next = self.moved(cell, chosen);
        let at_goal = next == self.goal;
        let mut action_vec = vec![0.0; GRID_ACTIONS];
        action_vec[action] = 1.0;
        Ok(Transition {
            state: self.one_hot(cell),
            action: action_vec,
            reward: if at_goal { 1.0 } else { -self.step_penalty },
            cost: Cost::from(self.is_hazard(next)),
            next_state: self.one_hot(next),
            done: at_goal,
            truncated: false,
        })
    }

    pub fn sample_start(&self, rng: &mut dyn RngCore) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, &p) in self.start.iter().enumerate() {
            acc += p;
            if u < acc {
                return c;
            }
        }
        self.start.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Rolls out one episode with `policy(cell, rng) -> action index`.
    pub fn rollout<P>(&self, mut policy: P, rng: &mut dyn RngCore) -> Result<Trajectory>
    where
        P: FnMut(usize, &mut dyn RngCore) -> usize,
    {
        let mut cell = self.sample_start(rng);
        let mut records = Vec::new();
        for t in 0..self.max_steps {
            let a = policy(cell, rng);
            let mut tr = self.grid_step(cell, a, rng)?;
            if !tr.done && t + 1 == self.max_steps {
                tr.truncated = true;
            }
            cell = self.cell_of(&tr.next_state)?;
            let stop = tr.done;
            records.push(tr);
            if stop {
                break;
            }
        }
        Trajectory::new(records)
    }

    /// Finite CMDP view: `c(s, a) = 1` iff the successor is a hazard and the
    /// goal becomes an absorbing zero-cost state. Requires the successor's
    /// hazard status to be deterministic for every `(s, a)`.
    pub fn to_cmdp(&self, gamma: f64, cost_threshold: f64) -> Result<CmdpSpec> {
        let n = self.n_cells();
        let mut transitions = vec![vec![Vec::new(); GRID_ACTIONS]; n];
        let mut reward = vec![vec![0.0; GRID_ACTIONS]; n];
        let mut cost = vec![vec![0.0; GRID_ACTIONS]; n];
        for s in 0..n {
            for a in GridAction::ALL {
                let ai = a.index();
                if s == self.goal {
                    transitions[s][ai] = vec![(s, 1.0)];
                    continue;
                }
                let succ = merge(self.successors(s, a));
                let hazard_mass: f64 = succ.iter().filter(|(c, _)| self.is_hazard(*c)).map(|(_, p)| p).sum();
                if hazard_mass != 0.0 && hazard_mass != 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "cost of ({s}, {a:?}) is stochastic; finite CMDP needs binary c(s, a)"
                    )));
                }
                cost[s][ai] = hazard_mass;
                reward[s][ai] = succ
                    .iter()
                    .map(|&(c, p)| p * if c == self.goal { 1.0 } else { -self.step_penalty })
                    .sum();
                transitions[s][ai] = succ;
            }
        }
        let mdp = FiniteMdp {
            n_states: n,
            n_actions: GRID_ACTIONS,
            transitions,
            reward,
            cost,
            initial: self.start.clone(),
        };
        CmdpSpec::finite(mdp, gamma, cost_threshold)
    }

    /// ASCII map: `H` hazard, `G` goal, `S` possible start, `.` otherwise.
    pub fn render_ascii(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let c = y * self.width + x;
                let ch = if c == self.goal {
                    'G'
                } else if self.is_hazard(c) {
                    'H'
                } else if self.start[c] > 0.0 {
                    'S'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    /// Occupancy CSV with header `x,y,kind`.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("x,y,kind\n");
        for c in 0..self.n_cells() {
            let (x, y) = self.coords(c);
            let kind = if c == self.goal {
                "goal"
            } else if self.is_hazard(c) {
                "hazard"
            } else if self.start[c] > 0.0 {
                "start"
            } else {
                "free"
            };
            let _ = writeln!(out, "{x},{y},{kind}");
        }
        out
    }
}

fn merge(succ: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (c, p) in succ {
        match out.iter_mut().find(|(d, _)| *d == c) {
            Some(e) => e.1 += p,
            None => out.push((c, p)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn strip() -> GridHazardEnv {
        // . H G
        let mut start = vec![0.0; 3];
        start[0] = 1.0;
        GridHazardEnv::new(3, 1, vec![1], 2, 0.0, start, 10).unwrap()
    }

    #[test]
    fn stepping_into_hazard_costs_without_ending() {
        let env = strip();
        let t = env.grid_step(0, GridAction::Right.index(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.cost, Cost::Unsafe);
        assert!(!t.done);
    }

    #[test]
    fn reaching_goal_rewards_and_ends() {
        let env = strip();
        let t = env.grid_step(1, GridAction::Right.index(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.reward, 1.0);
        assert!(t.done);
        assert_eq!(t.cost, Cost::Safe);
    }

    #[test]
    fn walls_block() {
        let env = strip();
        let t = env.grid_step(0, GridAction::Left.index(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.next_state, t.state);
        let t = env.grid_step(0, GridAction::Up.index(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.next_state, t.state);
    }

    #[test]
    fn out_of_range_inputs_error() {
        let env = strip();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(env.grid_step(3, 0, &mut rng).is_err());
        assert!(env.grid_step(0, 4, &mut rng).is_err());
    }

    #[test]
    fn invalid_layouts_rejected() {
        assert!(GridHazardEnv::new(3, 1, vec![2], 2, 0.0, vec![1.0, 0.0, 0.0], 5).is_err());
        assert!(GridHazardEnv::new(3, 1, vec![1], 2, 1.0, vec![1.0, 0.0, 0.0], 5).is_err());
    }

    #[test]
    fn slip_is_seed_deterministic() {
        let mut env = GridHazardEnv::six_by_six();
        env.slip_prob = 0.3;
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            env.rollout(|_, r| r.random_range(0..4), &mut rng).unwrap()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn cmdp_view_matches_step_semantics() {
        let env = GridHazardEnv::six_by_six();
        let cmdp = env.to_cmdp(0.99, 0.0).unwrap();
        let m = cmdp.as_finite().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in 0..env.n_cells() {
            if s == env.goal {
                continue;
            }
            for a in 0..4 {
                let t = env.grid_step(s, a, &mut rng).unwrap();
                assert_eq!(m.cost[s][a], t.cost.value());
                assert_eq!(m.transitions[s][a], vec![(env.cell_of(&t.next_state).unwrap(), 1.0)]);
            }
        }
    }

    #[test]
    fn render_marks_cells() {
        let map = strip().render_ascii();
        assert_eq!(map, "SHG\n");
        assert!(strip().render_csv().contains("1,0,hazard"));
    }
}
