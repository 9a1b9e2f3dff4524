//! Single-trajectory Monte-Carlo estimators of feasibility and cost value.

use serde::{Deserialize, Serialize};

use crate::cmdp::Trajectory;
use crate::error::{Error, Result};

/// How discounting is applied inside the single-trajectory estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `max_{i>=t} gamma^(i-t) c_i` and `sum_{i>=t} gamma^(i-t) c_i`.
    #[default]
    Relative,
    /// Absolute time discounting: `max_{i>=t} gamma^i c_i` and `sum_{i>=t} gamma^i c_i`.
    Absolute,
    /// Undiscounted `max_{i>=t} c_i` with the relative sum. This is the form
    /// under which the smoothness closed forms are derived.
    Appendix,
}

impl Convention {
    pub const ALL: [Convention; 3] = [Convention::Relative, Convention::Absolute, Convention::Appendix];

    /// `(max weight, sum weight)` for every `i` in `t..len`, built by
    /// repeated multiplication.
    fn weights(self, t: usize, len: usize, gamma: f64) -> Vec<(f64, f64)> {
        let mut abs = 1.0;
        for _ in 0..t {
            abs *= gamma;
        }
        let mut rel = 1.0;
        let mut out = Vec::with_capacity(len.saturating_sub(t));
        for _ in t..len {
            out.push(match self {
                Convention::Relative => (rel, rel),
                Convention::Absolute => (abs, abs),
                Convention::Appendix => (1.0, rel),
            });
            rel *= gamma;
            abs *= gamma;
        }
        out
    }
}

fn check_index(costs: &[f64], t: usize) -> Result<()> {
    if t >= costs.len() {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: costs.len(),
        });
    }
    Ok(())
}

/// Feasibility estimate at index `t` of a cost sequence.
pub fn mc_feasibility_costs(costs: &[f64], t: usize, gamma: f64, convention: Convention) -> Result<f64> {
    check_index(costs, t)?;
    let w = convention.weights(t, costs.len(), gamma);
    Ok(w.iter().zip(&costs[t..]).map(|(w, c)| w.0 * c).fold(0.0, f64::max))
}

/// Cost-value estimate at index `t` of a cost sequence.
pub fn mc_cost_value_costs(costs: &[f64], t: usize, gamma: f64, convention: Convention) -> Result<f64> {
    check_index(costs, t)?;
    let w = convention.weights(t, costs.len(), gamma);
    Ok(w.iter().zip(&costs[t..]).map(|(w, c)| w.1 * c).sum())
}

/// `max_{i>=t} gamma^(i-t) c_i` along `traj`.
pub fn mc_feasibility(traj: &Trajectory, t: usize, gamma: f64) -> Result<f64> {
    mc_feasibility_costs(&traj.costs(), t, gamma, Convention::Relative)
}

/// `sum_{i>=t} gamma^(i-t) c_i` along `traj`.
pub fn mc_cost_value(traj: &Trajectory, t: usize, gamma: f64) -> Result<f64> {
    mc_cost_value_costs(&traj.costs(), t, gamma, Convention::Relative)
}

/// Both estimators at every index, `(F_hat, V_hat)`.
pub fn estimates(costs: &[f64], gamma: f64, convention: Convention) -> (Vec<f64>, Vec<f64>) {
    (0..costs.len())
        .map(|t| {
            (
                mc_feasibility_costs(costs, t, gamma, convention).expect("index in range"),
                mc_cost_value_costs(costs, t, gamma, convention).expect("index in range"),
            )
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::test_support::chain;
    use proptest::prelude::*;

    #[test]
    fn zero_costs_give_zero() {
        let tr = chain(5, &[], 0.0);
        for t in 0..5 {
            assert_eq!(mc_feasibility(&tr, t, 0.9).unwrap(), 0.0);
            assert_eq!(mc_cost_value(&tr, t, 0.9).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_cost_is_discounted_from_t() {
        let tr = chain(6, &[false, false, false, false, true], 0.0);
        assert_eq!(mc_feasibility(&tr, 1, 0.9).unwrap(), 0.9 * 0.9 * 0.9);
        assert_eq!(mc_feasibility(&tr, 5, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn appendix_convention_is_undiscounted_max() {
        let costs = [0.0, 0.0, 1.0, 0.0];
        for i in 0..=2 {
            assert_eq!(mc_feasibility_costs(&costs, i, 0.9, Convention::Appendix).unwrap(), 1.0);
            assert_eq!(
                mc_cost_value_costs(&costs, i, 0.9, Convention::Appendix).unwrap(),
                [0.9 * 0.9, 0.9, 1.0][i]
            );
        }
    }

    #[test]
    fn geometric_sum() {
        let tr = chain(3, &[true, true, true], 0.0);
        assert_eq!(mc_cost_value(&tr, 0, 0.5).unwrap(), 1.75);
    }

    #[test]
    fn out_of_range_index() {
        let tr = chain(3, &[], 0.0);
        assert!(matches!(mc_feasibility(&tr, 3, 0.9), Err(Error::IndexOutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn sum_matches_brute_force(bits in proptest::collection::vec(any::<bool>(), 1..40), gamma in 0.01f64..0.999) {
            let costs: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            for t in 0..costs.len() {
                let mut brute = 0.0;
                let mut w = 1.0;
                for c in &costs[t..] {
                    brute += w * c;
                    w *= gamma;
                }
                let v = mc_cost_value_costs(&costs, t, gamma, Convention::Relative).unwrap();
                prop_assert_eq!(v, brute);
                let f = mc_feasibility_costs(&costs, t, gamma, Convention::Relative).unwrap();
                prop_assert!(f <= v + 1e-15);
            }
        }
    }
}
