use serde::{Deserialize, Serialize};

use crate::cmdp::Trajectory;
use crate::error::{Error, Result};
use crate::oracle::{estimates, Convention};

/// Mean absolute consecutive difference, `sum |f(t) - f(t+1)| / T` over
/// `T + 1` points.
pub fn temporal_smoothness(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!("smoothness needs at least two points, got {}", values.len())));
    }
    let t = (values.len() - 1) as f64;
    Ok(values.windows(2).map(|w| (w[0] - w[1]).abs()).sum::<f64>() / t)
}

/// Smoothness of an estimator sequence over a `T`-step trajectory, with the
/// value after the last step taken as 0.
pub fn trajectory_smoothness(estimates: &[f64]) -> Result<f64> {
    let mut padded = estimates.to_vec();
    padded.push(0.0);
    temporal_smoothness(&padded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub convention: Convention,
    pub gamma: f64,
    /// `L(F_hat)` per trajectory.
    pub feasibility: Vec<f64>,
    /// `L(V_hat_c)` per trajectory.
    pub cost_value: Vec<f64>,
    pub mean_feasibility: f64,
    pub mean_cost_value: f64,
    /// Trajectories with `L(F_hat) > L(V_hat_c)`.
    pub violations: usize,
    /// Indices with `F_hat(t) > V_hat_c(t)`, summed over trajectories.
    pub ordering_violations: usize,
}

/// Compares the smoothness of both estimators on every cost sequence.
pub fn prop2_audit_costs(costs: &[Vec<f64>], gamma: f64, convention: Convention) -> Result<SmoothnessReport> {
    if costs.is_empty() {
        return Err(Error::InvalidArgument("audit needs at least one trajectory".into()));
    }
    let (mut lf, mut lv) = (Vec::with_capacity(costs.len()), Vec::with_capacity(costs.len()));
    let (mut violations, mut ordering_violations) = (0, 0);
    for c in costs {
        if c.is_empty() {
            return Err(Error::InvalidTrajectory("empty cost sequence".into()));
        }
        let (f, v) = estimates(c, gamma, convention);
        ordering_violations += f.iter().zip(&v).filter(|(f, v)| f > v).count();
        let (a, b) = (trajectory_smoothness(&f)?, trajectory_smoothness(&v)?);
        if a > b {
            violations += 1;
        }
        lf.push(a);
        lv.push(b);
    }
    let n = costs.len() as f64;
    Ok(SmoothnessReport {
        convention,
        gamma,
        mean_feasibility: lf.iter().sum::<f64>() / n,
        mean_cost_value: lv.iter().sum::<f64>() / n,
        feasibility: lf,
        cost_value: lv,
        violations,
        ordering_violations,
    })
}

pub fn prop2_audit(trajectories: &[Trajectory], gamma: f64, convention: Convention) -> Result<SmoothnessReport> {
    let costs: Vec<Vec<f64>> = trajectories.iter().map(|t| t.costs()).collect();
    prop2_audit_costs(&costs, gamma, convention)
}

/// Closed forms for a `T`-step trajectory whose only cost sits at the
/// 1-based index `i0`: `(1 / T, (2 - gamma^(i0 - 1)) / T)` under
/// [`Convention::Appendix`].
pub fn single_cost_closed_forms(t: usize, i0: usize, gamma: f64) -> (f64, f64) {
    let tf = t as f64;
    (1.0 / tf, (2.0 - gamma.powi(i0 as i32 - 1)) / tf)
}

/// Unnormalised sums of `|f(t) - f(t+1)|` over the 1-based steps
/// `i0..i1` of a trajectory with costs at `i0 < i1` only, for both
/// estimators under [`Convention::Relative`]. The feasibility sum equals
/// `2 (1 - gamma^(i1 - i0 - 1))`.
pub fn two_cost_segment_sums(t: usize, i0: usize, i1: usize, gamma: f64) -> Result<(f64, f64)> {
    if !(1 <= i0 && i0 < i1 && i1 <= t) {
        return Err(Error::InvalidArgument(format!("need 1 <= i0 < i1 <= T, got {i0}, {i1}, {t}")));
    }
    let mut costs = vec![0.0; t];
    costs[i0 - 1] = 1.0;
    costs[i1 - 1] = 1.0;
    let (f, v) = estimates(&costs, gamma, Convention::Relative);
    let seg = |x: &[f64]| (i0 - 1..i1 - 1).map(|j| (x[j] - x[j + 1]).abs()).sum::<f64>();
    Ok((seg(&f), seg(&v)))
}
