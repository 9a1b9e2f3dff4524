//! Monte-Carlo targets from complete on-policy episodes.

use rand::Rng;

use crate::cmdp::{McTargets, Trajectory, TransitionBatch};
use crate::error::{Error, Result};
use crate::oracle::{estimates, Convention};

/// Per-index Monte-Carlo targets of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTargets {
    pub reward_return: Vec<f64>,
    pub cost_value: Vec<f64>,
    pub feasibility: Vec<f64>,
}

/// `(V_c, F)` by one backward pass: `V(i) = c_i + gamma V(i+1)` and
/// `F(i) = max(c_i, gamma F(i+1))`.
pub fn onpolicy_targets(costs: &[f64], gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let n = costs.len();
    let (mut v, mut f) = (vec![0.0; n], vec![0.0; n]);
    let (mut nv, mut nf) = (0.0, 0.0);
    for i in (0..n).rev() {
        nv = costs[i] + gamma * nv;
        nf = costs[i].max(gamma * nf);
        v[i] = nv;
        f[i] = nf;
    }
    (v, f)
}

/// Same targets under an explicit estimator convention.
pub fn onpolicy_targets_with(costs: &[f64], gamma: f64, convention: Convention) -> (Vec<f64>, Vec<f64>) {
    match convention {
        Convention::Relative => onpolicy_targets(costs, gamma),
        other => {
            let (f, v) = estimates(costs, gamma, other);
            (v, f)
        }
    }
}

/// Discounted reward-to-go.
pub fn reward_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}

pub fn episode_targets(traj: &Trajectory, gamma: f64) -> EpisodeTargets {
    let rewards: Vec<f64> = traj.transitions().iter().map(|t| t.reward).collect();
    let (cost_value, feasibility) = onpolicy_targets(&traj.costs(), gamma);
    EpisodeTargets {
        reward_return: reward_to_go(&rewards, gamma),
        cost_value,
        feasibility,
    }
}

/// Samples `batch` length-`k` windows from `episodes` and attaches the
/// Monte-Carlo head targets of every step. Also returns the `(episode,
/// start)` of each window.
pub fn mc_window_batch<R: Rng + ?Sized>(
    episodes: &[Trajectory],
    targets: &[EpisodeTargets],
    batch: usize,
    k: usize,
    rng: &mut R,
) -> Result<(TransitionBatch, Vec<(usize, usize)>)> {
    let starts: Vec<(usize, usize)> = episodes
        .iter()
        .enumerate()
        .flat_map(|(e, tr)| (0..(tr.len() + 1).saturating_sub(k)).map(move |t| (e, t)))
        .collect();
    if starts.is_empty() {
        let len = episodes.iter().map(|t| t.len()).max().unwrap_or(0);
        return Err(Error::NoValidStart { k, len });
    }
    let picks: Vec<(usize, usize)> = (0..batch).map(|_| starts[rng.random_range(0..starts.len())]).collect();
    let windows: Vec<&[crate::cmdp::Transition]> = picks.iter().map(|&(e, t)| &episodes[e].transitions()[t..t + k]).collect();
    let mut out = TransitionBatch::from_windows(&windows, picks.iter().map(|p| p.1).collect())?;
    let per_step = |sel: fn(&EpisodeTargets) -> &Vec<f64>| -> Vec<Vec<f64>> {
        (0..k).map(|j| picks.iter().map(|&(e, t)| sel(&targets[e])[t + j]).collect()).collect()
    };
    out.mc_targets = Some(McTargets {
        feasibility: per_step(|t| &t.feasibility),
        cost_value: per_step(|t| &t.cost_value),
    });
    Ok((out, picks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{mc_cost_value_costs, mc_feasibility_costs};
    use proptest::prelude::*;

    #[test]
    fn zero_costs() {
        let (v, f) = onpolicy_targets(&[0.0; 6], 0.9);
        assert!(v.iter().chain(&f).all(|&x| x == 0.0));
    }

    #[test]
    fn last_step_cost_unrolls() {
        let (_, f) = onpolicy_targets(&[0.0, 0.0, 0.0, 1.0], 0.9);
        assert_eq!(f, vec![0.9 * 0.9 * 0.9, 0.9 * 0.9, 0.9, 1.0]);
    }

    #[test]
    fn reward_to_go_geometric() {
        assert_eq!(reward_to_go(&[1.0, 1.0, 1.0], 0.5), vec![1.75, 1.5, 1.0]);
    }

    proptest! {
        #[test]
        fn recursion_matches_estimators(bits in proptest::collection::vec(any::<bool>(), 1..60), gamma in 0.05f64..0.999) {
            let costs: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let (v, f) = onpolicy_targets(&costs, gamma);
            for t in 0..costs.len() {
                let fv = mc_feasibility_costs(&costs, t, gamma, Convention::Relative).unwrap();
                let vv = mc_cost_value_costs(&costs, t, gamma, Convention::Relative).unwrap();
                prop_assert!((f[t] - fv).abs() <= 1e-12);
                prop_assert!((v[t] - vv).abs() <= 1e-9 * vv.max(1.0));
            }
        }
    }
}
