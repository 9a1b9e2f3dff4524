//! Exact ground truth on finite CMDPs and single-trajectory estimators.

mod estimators;
mod exact;
pub mod instances;
mod tables;

pub use estimators::{estimates, mc_cost_value, mc_cost_value_costs, mc_feasibility, mc_feasibility_costs, Convention};
pub use exact::{
    cost_backup, exact_cost_value, exact_feasibility, feasibility_backup, safe_probability, sample_costs,
    ENUMERATION_LIMIT, MAX_SWEEPS,
};
pub use tables::{CostValueTable, FeasibilityTable, StateActionTable, TabularPolicy};

use crate::cmdp::FiniteMdp;

/// Both sides of the contraction inequality for one operator application:
/// `(||P F1 - P F2||_inf, bound_gamma * ||F1 - F2||_inf)`, where the operator
/// itself runs with `op_gamma`.
pub fn contraction_sides(
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
    op_gamma: f64,
    bound_gamma: f64,
    f1: &FeasibilityTable,
    f2: &FeasibilityTable,
) -> (f64, f64) {
    let lhs = feasibility_backup(mdp, pi, op_gamma, f1).sup_distance(&feasibility_backup(mdp, pi, op_gamma, f2));
    (lhs, bound_gamma * f1.sup_distance(f2))
}

/// Outcome of [`contraction_check`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ContractionReport {
    pub applications: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` seen (0 when every `rhs` is 0).
    pub worst_ratio: f64,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

const DYADIC_GAMMAS: [f64; 5] = [0.5, 0.75, 0.875, 0.984375, 0.9921875];

/// Applies the feasibility operator to `applications` random table pairs and
/// counts violations of `||P F1 - P F2|| <= gamma ||F1 - F2||` with no
/// tolerance. Even applications use random CMDPs and random doubles; odd ones
/// use dyadic instances with `F2 = F1 + 1/16`, where the bound is attained
/// exactly. `op_gamma` replaces the operator's discount (the bound keeps the
/// instance's), which lets tests drive a broken operator.
pub fn contraction_check(applications: usize, seed: u64, op_gamma: Option<f64>) -> ContractionReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = ContractionReport {
        applications,
        violations: 0,
        worst_ratio: 0.0,
    };
    for i in 0..applications {
        let ns = rng.random_range(2..=8);
        let na = rng.random_range(1..=4);
        let (cmdp, pi, f1, f2) = if i % 2 == 0 {
            let gamma = rng.random_range(0.5..0.999);
            let cmdp = instances::random_cmdp(ns, na, 0.4, gamma, &mut rng);
            let pi = TabularPolicy::random(ns, na, &mut rng);
            let f1 = instances::random_table(ns, na, &mut rng);
            let f2 = instances::random_table(ns, na, &mut rng);
            (cmdp, pi, f1, f2)
        } else {
            let gamma = DYADIC_GAMMAS[rng.random_range(0..DYADIC_GAMMAS.len())];
            let (cmdp, pi) = instances::dyadic_cmdp(ns, na, gamma, &mut rng);
            let f1 = instances::dyadic_table(ns, na, &mut rng);
            let f2 = StateActionTable::from_fn(ns, na, |s, a| f1.get(s, a) + 0.0625);
            (cmdp, pi, f1, f2)
        };
        let mdp = cmdp.as_finite().expect("finite instance");
        let (lhs, rhs) = contraction_sides(mdp, &pi, op_gamma.unwrap_or(cmdp.gamma), cmdp.gamma, &f1, &f2);
        if lhs > rhs {
            report.violations += 1;
        }
        if rhs > 0.0 {
            report.worst_ratio = report.worst_ratio.max(lhs / rhs);
        }
    }
    report
}
