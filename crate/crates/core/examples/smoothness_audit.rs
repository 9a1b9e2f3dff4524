//! Temporal smoothness of the feasibility and cost-value estimators over
//! random binary-cost trajectories, under each discounting convention.
//!
//! cargo run --release --example smoothness_audit

use fcsrl::analysis::{prop2_audit_costs, single_cost_closed_forms, two_cost_segment_sums};
use fcsrl::cli::random_cost_trajectories;
use fcsrl::oracle::Convention;

fn main() -> fcsrl::Result<()> {
    let gamma = 0.99;
    let trajs = random_cost_trajectories(1000, 50, 0);
    for conv in Convention::ALL {
        let r = prop2_audit_costs(&trajs, gamma, conv)?;
        println!(
            "{conv:<9?} mean L(F) {:.4}  mean L(V) {:.4}  violations {:>3}  pointwise F > V {}",
            r.mean_feasibility, r.mean_cost_value, r.violations, r.ordering_violations
        );
    }
    let (t, i0) = (20, 7);
    let mut c = vec![0.0; t];
    c[i0 - 1] = 1.0;
    let r = prop2_audit_costs(&[c], gamma, Convention::Appendix)?;
    let (lf, lv) = single_cost_closed_forms(t, i0, gamma);
    println!("single cost at {i0} of {t}: L(F) {:.12} vs {lf:.12}, L(V) {:.12} vs {lv:.12}", r.feasibility[0], r.cost_value[0]);
    let (sf, sv) = two_cost_segment_sums(30, 5, 14, gamma)?;
    println!("two costs at 5 and 14: segment sums F {sf:.6} (2(1 - gamma^8) = {:.6}), V {sv:.6}", 2.0 * (1.0 - gamma.powi(8)));
    Ok(())
}
