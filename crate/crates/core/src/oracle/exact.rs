use rand::Rng;

use super::tables::{CostValueTable, FeasibilityTable, StateActionTable, TabularPolicy};
use crate::cmdp::{CmdpSpec, FiniteMdp};
use crate::error::{Error, Result};

/// Sweep limit for the fixed-point iterations.
pub const MAX_SWEEPS: usize = 1_000_000;
/// Leaf limit for [`safe_probability`].
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

fn next_value(mdp: &FiniteMdp, pi: &TabularPolicy, table: &StateActionTable, s: usize, a: usize) -> f64 {
    mdp.transitions[s][a]
        .iter()
        .map(|&(sn, p)| {
            let inner: f64 = pi.row(sn).iter().zip(&table.values[sn]).map(|(q, v)| q * v).sum();
            p * inner
        })
        .sum()
}

/// One application of the feasibility operator
/// `(P F)(s, a) = (1 - gamma) c + gamma * max{c, E_{s', a'} F(s', a')}`.
pub fn feasibility_backup(mdp: &FiniteMdp, pi: &TabularPolicy, gamma: f64, f: &FeasibilityTable) -> FeasibilityTable {
    StateActionTable::from_fn(mdp.n_states, mdp.n_actions, |s, a| {
        let c = mdp.cost[s][a];
        (1.0 - gamma) * c + gamma * c.max(next_value(mdp, pi, f, s, a))
    })
}

/// One application of the policy-evaluation operator `c + gamma * E Q'`.
pub fn cost_backup(mdp: &FiniteMdp, pi: &TabularPolicy, gamma: f64, q: &CostValueTable) -> CostValueTable {
    StateActionTable::from_fn(mdp.n_states, mdp.n_actions, |s, a| {
        mdp.cost[s][a] + gamma * next_value(mdp, pi, q, s, a)
    })
}

fn check_inputs(cmdp: &CmdpSpec, pi: &TabularPolicy, gamma: f64, tol: f64) -> Result<()> {
    pi.check_against(cmdp.as_finite()?)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    Ok(())
}

fn fixed_point<F>(n_states: usize, n_actions: usize, tol: f64, mut backup: F) -> Result<StateActionTable>
where
    F: FnMut(&StateActionTable) -> StateActionTable,
{
    let mut current = StateActionTable::zeros(n_states, n_actions);
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let next = backup(&current);
        residual = next.sup_distance(&current);
        current = next;
        if residual <= tol {
            return Ok(current);
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_SWEEPS,
        residual,
    })
}

/// Fixed point of [`feasibility_backup`], iterated from `F = 0`.
pub fn exact_feasibility(cmdp: &CmdpSpec, pi: &TabularPolicy, gamma: f64, tol: f64) -> Result<FeasibilityTable> {
    check_inputs(cmdp, pi, gamma, tol)?;
    let mdp = cmdp.as_finite()?;
    fixed_point(mdp.n_states, mdp.n_actions, tol, |f| feasibility_backup(mdp, pi, gamma, f))
}

/// Fixed point of [`cost_backup`], iterated from `Q = 0`.
pub fn exact_cost_value(cmdp: &CmdpSpec, pi: &TabularPolicy, gamma: f64, tol: f64) -> Result<CostValueTable> {
    check_inputs(cmdp, pi, gamma, tol)?;
    let mdp = cmdp.as_finite()?;
    fixed_point(mdp.n_states, mdp.n_actions, tol, |q| cost_backup(mdp, pi, gamma, q))
}

fn is_safe_sink(mdp: &FiniteMdp, s: usize) -> bool {
    (0..mdp.n_actions).all(|a| mdp.cost[s][a] == 0.0 && mdp.transitions[s][a] == [(s, 1.0)])
}

/// Probability that `c(s_t, a_t) = 0` for every `t = 0..=horizon` when
/// starting from `(s, a)`, by enumerating every trajectory. The leaf limit
/// applies to each starting pair.
///
/// Branches stop early at unsafe pairs (probability 0) and at absorbing
/// zero-cost states (probability 1).
pub fn safe_probability(cmdp: &CmdpSpec, pi: &TabularPolicy, horizon: usize) -> Result<StateActionTable> {
    let mdp = cmdp.as_finite()?;
    pi.check_against(mdp)?;
    let sinks: Vec<bool> = (0..mdp.n_states).map(|s| is_safe_sink(mdp, s)).collect();
    let mut out = StateActionTable::zeros(mdp.n_states, mdp.n_actions);
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let mut leaves = 0u64;
            out.values[s][a] = enumerate(mdp, pi, &sinks, s, a, horizon, &mut leaves)?;
        }
    }
    Ok(out)
}

fn enumerate(
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
    sinks: &[bool],
    s: usize,
    a: usize,
    remaining: usize,
    leaves: &mut u64,
) -> Result<f64> {
    if mdp.cost[s][a] != 0.0 || sinks[s] || remaining == 0 {
        *leaves += 1;
        if *leaves > ENUMERATION_LIMIT {
            return Err(Error::Intractable {
                limit: ENUMERATION_LIMIT,
            });
        }
        return Ok(if mdp.cost[s][a] != 0.0 { 0.0 } else { 1.0 });
    }
    let mut total = 0.0;
    for &(sn, p) in &mdp.transitions[s][a] {
        if p == 0.0 {
            continue;
        }
        for (an, &q) in pi.row(sn).iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            total += p * q * enumerate(mdp, pi, sinks, sn, an, remaining - 1, leaves)?;
        }
    }
    Ok(total)
}

/// Samples `steps` binary costs of one rollout starting at `(s0, a0)`.
pub fn sample_costs<R: Rng + ?Sized>(
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
    s0: usize,
    a0: usize,
    steps: usize,
    rng: &mut R,
) -> Vec<f64> {
    let (mut s, mut a) = (s0, a0);
    let mut costs = Vec::with_capacity(steps);
    for _ in 0..steps {
        costs.push(mdp.cost[s][a]);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let succ = &mdp.transitions[s][a];
        let mut next = succ.last().map_or(s, |e| e.0);
        for &(sn, p) in succ {
            acc += p;
            if u < acc {
                next = sn;
                break;
            }
        }
        s = next;
        a = pi.sample(s, rng);
    }
    costs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::instances;

    #[test]
    fn zero_costs_give_zero_tables() {
        let mut mdp = instances::chain(0.3).as_finite().unwrap().clone();
        for row in &mut mdp.cost {
            row.fill(0.0);
        }
        let cmdp = CmdpSpec::finite(mdp, 0.9, 0.0).unwrap();
        let pi = TabularPolicy::uniform(3, 1);
        assert_eq!(exact_feasibility(&cmdp, &pi, 0.9, 1e-10).unwrap().max_value(), 0.0);
        assert_eq!(exact_cost_value(&cmdp, &pi, 0.9, 1e-10).unwrap().max_value(), 0.0);
    }

    #[test]
    fn unsafe_pairs_have_unit_feasibility_and_geometric_cost() {
        let cmdp = instances::chain(0.3);
        let pi = TabularPolicy::uniform(3, 1);
        let f = exact_feasibility(&cmdp, &pi, 0.9, 1e-10).unwrap();
        assert_eq!(f.get(instances::CHAIN_HAZARD, 0), 1.0);
        let q = exact_cost_value(&cmdp, &pi, 0.9, 1e-12).unwrap();
        assert!((q.get(instances::CHAIN_HAZARD, 0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn continuous_flavor_is_rejected() {
        let cmdp = CmdpSpec::continuous(4, 2, 0.99, 10.0).unwrap();
        let pi = TabularPolicy::uniform(1, 1);
        assert!(matches!(exact_feasibility(&cmdp, &pi, 0.99, 1e-10), Err(Error::UnsupportedFlavor)));
        assert!(matches!(safe_probability(&cmdp, &pi, 3), Err(Error::UnsupportedFlavor)));
    }

    #[test]
    fn unsafe_start_has_zero_safe_probability() {
        let cmdp = instances::chain(0.3);
        let pi = TabularPolicy::uniform(3, 1);
        let p = safe_probability(&cmdp, &pi, 5).unwrap();
        assert_eq!(p.get(instances::CHAIN_HAZARD, 0), 0.0);
        assert!((p.get(0, 0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn hazard_chain_survival_is_point_nine_cubed() {
        let cmdp = instances::hazard_chain(3, 0.1);
        let pi = TabularPolicy::uniform(cmdp.state_dim, 1);
        let p = safe_probability(&cmdp, &pi, 3).unwrap();
        assert!((p.get(0, 0) - 0.729).abs() < 1e-15, "{}", p.get(0, 0));
    }

    #[test]
    fn enumeration_guard_trips() {
        // Two actions that never stop, horizon 30 -> 2^30 leaves.
        let mdp = FiniteMdp {
            n_states: 1,
            n_actions: 2,
            transitions: vec![vec![vec![(0, 1.0)], vec![(0, 1.0)]]],
            reward: vec![vec![0.0, 0.0]],
            cost: vec![vec![0.0, 0.0]],
            initial: vec![1.0],
        };
        // A state whose actions self-loop with zero cost is a sink; break that
        // with a second state.
        let mut mdp2 = mdp.clone();
        mdp2.n_states = 2;
        mdp2.transitions = vec![vec![vec![(1, 1.0)], vec![(1, 1.0)]], vec![vec![(0, 1.0)], vec![(0, 1.0)]]];
        mdp2.reward = vec![vec![0.0; 2]; 2];
        mdp2.cost = vec![vec![0.0; 2]; 2];
        mdp2.initial = vec![1.0, 0.0];
        let cmdp = CmdpSpec::finite(mdp2, 0.9, 0.0).unwrap();
        let pi = TabularPolicy::uniform(2, 2);
        assert!(matches!(safe_probability(&cmdp, &pi, 30), Err(Error::Intractable { .. })));
        let cmdp = CmdpSpec::finite(mdp, 0.9, 0.0).unwrap();
        let p = safe_probability(&cmdp, &TabularPolicy::uniform(1, 2), 30).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
    }
}
