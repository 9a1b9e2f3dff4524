//! Small finite CMDPs used by the oracle checks, tests and examples.

use rand::seq::index::sample;
use rand::Rng;

use super::tables::{StateActionTable, TabularPolicy};
use crate::cmdp::{CmdpSpec, FiniteMdp};

/// Index of the absorbing hazard in [`chain`].
pub const CHAIN_HAZARD: usize = 1;

/// Three states, one action: `s0` moves to an absorbing unit-cost hazard with
/// probability `p` and to an absorbing safe state otherwise.
pub fn chain(p: f64) -> CmdpSpec {
    let mdp = FiniteMdp {
        n_states: 3,
        n_actions: 1,
        transitions: vec![vec![vec![(1, p), (2, 1.0 - p)]], vec![vec![(1, 1.0)]], vec![vec![(2, 1.0)]]],
        reward: vec![vec![0.0]; 3],
        cost: vec![vec![0.0], vec![1.0], vec![0.0]],
        initial: vec![1.0, 0.0, 0.0],
    };
    CmdpSpec::finite(mdp, 0.9, 0.0).expect("valid chain")
}

/// Chain `0 -> 1 -> ... -> n-1 -> sink` where every step falls into an
/// absorbing hazard with probability `q`. State `n` is the safe sink and
/// `n + 1` the hazard.
pub fn hazard_chain(n: usize, q: f64) -> CmdpSpec {
    let (sink, hazard) = (n, n + 1);
    let mut transitions = Vec::with_capacity(n + 2);
    for i in 0..n {
        let next = if i + 1 == n { sink } else { i + 1 };
        transitions.push(vec![vec![(hazard, q), (next, 1.0 - q)]]);
    }
    transitions.push(vec![vec![(sink, 1.0)]]);
    transitions.push(vec![vec![(hazard, 1.0)]]);
    let mut cost = vec![vec![0.0]; n + 2];
    cost[hazard][0] = 1.0;
    let mut initial = vec![0.0; n + 2];
    initial[0] = 1.0;
    let mdp = FiniteMdp {
        n_states: n + 2,
        n_actions: 1,
        transitions,
        reward: vec![vec![0.0]; n + 2],
        cost,
        initial,
    };
    CmdpSpec::finite(mdp, 0.9, 0.0).expect("valid hazard chain")
}

/// Random CMDP: every `(s, a)` has two or three successors with random
/// weights, and costs are 1 with probability `cost_prob`. A single successor
/// can make the contraction bound tight, where rounding alone decides it;
/// the dyadic instances cover that case exactly.
pub fn random_cmdp<R: Rng + ?Sized>(n_states: usize, n_actions: usize, cost_prob: f64, gamma: f64, rng: &mut R) -> CmdpSpec {
    assert!(n_states >= 2, "random CMDP needs at least two states");
    let mut transitions = vec![vec![Vec::new(); n_actions]; n_states];
    let mut cost = vec![vec![0.0; n_actions]; n_states];
    let mut reward = vec![vec![0.0; n_actions]; n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            let k = rng.random_range(2..=3.min(n_states));
            let succ = sample(rng, n_states, k).into_vec();
            let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = w.iter().sum();
            transitions[s][a] = succ.into_iter().zip(w).map(|(sn, wi)| (sn, wi / total)).collect();
            cost[s][a] = if rng.random::<f64>() < cost_prob { 1.0 } else { 0.0 };
            reward[s][a] = rng.random_range(-1.0..1.0);
        }
    }
    let mdp = FiniteMdp {
        n_states,
        n_actions,
        transitions,
        reward,
        cost,
        initial: vec![1.0 / n_states as f64; n_states],
    };
    CmdpSpec::finite(mdp, gamma, 0.0).expect("valid random CMDP")
}

/// Random CMDP whose probabilities are multiples of 1/8, with a policy of
/// multiples of 1/4. Together with [`dyadic_table`] every operator sweep is
/// evaluated without rounding.
pub fn dyadic_cmdp<R: Rng + ?Sized>(n_states: usize, n_actions: usize, gamma: f64, rng: &mut R) -> (CmdpSpec, TabularPolicy) {
    let mut transitions = vec![vec![Vec::new(); n_actions]; n_states];
    let mut cost = vec![vec![0.0; n_actions]; n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            let mut counts = vec![0u32; n_states];
            for _ in 0..8 {
                counts[rng.random_range(0..n_states)] += 1;
            }
            transitions[s][a] = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(sn, &c)| (sn, c as f64 / 8.0))
                .collect();
            cost[s][a] = if rng.random::<bool>() { 1.0 } else { 0.0 };
        }
    }
    let mdp = FiniteMdp {
        n_states,
        n_actions,
        transitions,
        reward: vec![vec![0.0; n_actions]; n_states],
        cost,
        initial: vec![1.0 / n_states as f64; n_states],
    };
    let probs = (0..n_states)
        .map(|_| {
            let mut counts = vec![0u32; n_actions];
            for _ in 0..4 {
                counts[rng.random_range(0..n_actions)] += 1;
            }
            counts.iter().map(|&c| c as f64 / 4.0).collect()
        })
        .collect();
    let cmdp = CmdpSpec::finite(mdp, gamma, 0.0).expect("valid dyadic CMDP");
    (cmdp, TabularPolicy::new(probs).expect("rows sum to one"))
}

/// Table of random multiples of 2^-16 in `[0, 1]`.
pub fn dyadic_table<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> StateActionTable {
    StateActionTable::from_fn(n_states, n_actions, |_, _| rng.random_range(0..=65536u32) as f64 / 65536.0)
}

/// Table of uniform random doubles in `[0, 1)`.
pub fn random_table<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> StateActionTable {
    StateActionTable::from_fn(n_states, n_actions, |_, _| rng.random())
}

/// Episodic "drift" gridworld: every step moves one row down and the action
/// picks a lateral move (left, stay, right); with probability `slip` the
/// lateral move is off by one in either direction. Hazard cells and the
/// bottom row lead to an absorbing zero-cost sink (the last state), and a
/// pair is unsafe iff its state is a hazard. Every episode therefore ends
/// within `height` steps.
pub fn drift_gridworld<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    n_hazards: usize,
    slip: f64,
    gamma: f64,
    rng: &mut R,
) -> CmdpSpec {
    assert!(width >= 1 && height >= 2, "drift gridworld needs at least two rows");
    let n_cells = width * height;
    let sink = n_cells;
    let hazards: Vec<usize> = sample(rng, n_cells - width, n_hazards.min(n_cells - width))
        .into_iter()
        .map(|i| i + width)
        .collect();
    let n_actions = 3;
    let mut transitions = vec![vec![Vec::new(); n_actions]; n_cells + 1];
    let mut cost = vec![vec![0.0; n_actions]; n_cells + 1];
    for cell in 0..n_cells {
        let (x, y) = (cell % width, cell / width);
        let hazard = hazards.contains(&cell);
        for a in 0..n_actions {
            cost[cell][a] = if hazard { 1.0 } else { 0.0 };
            if hazard || y + 1 == height {
                transitions[cell][a] = vec![(sink, 1.0)];
                continue;
            }
            let clamp = |v: i64| v.clamp(0, width as i64 - 1) as usize;
            let target = x as i64 + a as i64 - 1;
            let mut succ: Vec<(usize, f64)> = Vec::new();
            let mut add = |nx: usize, p: f64| {
                let c = (y + 1) * width + nx;
                match succ.iter_mut().find(|e| e.0 == c) {
                    Some(e) => e.1 += p,
                    None => succ.push((c, p)),
                }
            };
            add(clamp(target), 1.0 - slip);
            if slip > 0.0 {
                add(clamp(target - 1), slip / 2.0);
                add(clamp(target + 1), slip / 2.0);
            }
            transitions[cell][a] = succ;
        }
    }
    transitions[sink] = vec![vec![(sink, 1.0)]; n_actions];
    let mut initial = vec![0.0; n_cells + 1];
    for x in 0..width {
        initial[x] = 1.0 / width as f64;
    }
    let mdp = FiniteMdp {
        n_states: n_cells + 1,
        n_actions,
        transitions,
        reward: vec![vec![0.0; n_actions]; n_cells + 1],
        cost,
        initial,
    };
    CmdpSpec::finite(mdp, gamma, 0.0).expect("valid drift gridworld")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn builders_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            random_cmdp(5, 2, 0.3, 0.9, &mut rng);
            dyadic_cmdp(6, 3, 0.875, &mut rng);
            let g = drift_gridworld(6, 6, 4, 0.2, 0.99, &mut rng);
            assert!(g.state_dim <= 50);
        }
    }
}
