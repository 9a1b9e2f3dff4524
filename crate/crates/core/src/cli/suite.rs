use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::OracleConfig;
use crate::analysis::{prop2_audit_costs, single_cost_closed_forms, SmoothnessReport};
use crate::envs::GridHazardEnv;
use crate::error::Result;
use crate::oracle::{
    contraction_check, exact_cost_value, exact_feasibility, instances, safe_probability, Convention, TabularPolicy,
};
use crate::repr::{two_hot_project, Bins, DEFAULT_BINS};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckRow {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// Fixed-width pass/fail table.
pub fn render_table(rows: &[CheckRow]) -> String {
    let w = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(5);
    let mut s = format!("{:<w$}  result  detail\n", "check");
    for r in rows {
        let mark = if r.passed { "pass" } else { "FAIL" };
        s.push_str(&format!("{:<w$}  {mark:<6}  {}\n", r.name, r.detail));
    }
    s
}

/// Worst `|(1 - F) - P(all safe)| - (1 - gamma) H` over random drift
/// gridworlds of height `H <= max_height`, one discount at a time.
pub fn survival_bound_check(instances_per_gamma: usize, gammas: &[f64], max_height: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worlds = Vec::with_capacity(instances_per_gamma);
    for _ in 0..instances_per_gamma {
        let width = rng.random_range(3..=6);
        let height = rng.random_range(3..=max_height.max(3));
        let hazards = rng.random_range(2..=width * (height - 1) / 2);
        let cmdp = instances::drift_gridworld(width, height, hazards, 0.2, 0.99, &mut rng);
        let pi = TabularPolicy::random(cmdp.state_dim, 3, &mut rng);
        let safe = safe_probability(&cmdp, &pi, height)?;
        worlds.push((cmdp, pi, safe, height));
    }
    let mut rows = Vec::new();
    for &gamma in gammas {
        let (mut worst_gap, mut worst_slack, mut ok) = (0.0f64, f64::INFINITY, true);
        for (cmdp, pi, safe, h) in &worlds {
            let f = exact_feasibility(cmdp, pi, gamma, 1e-13)?;
            let bound = (1.0 - gamma) * *h as f64 + 1e-6;
            for s in 0..cmdp.state_dim {
                for a in 0..3 {
                    let gap = (1.0 - f.get(s, a) - safe.get(s, a)).abs();
                    worst_gap = worst_gap.max(gap);
                    worst_slack = worst_slack.min(bound - gap);
                    ok &= gap <= bound;
                }
            }
        }
        rows.push(CheckRow::new(
            format!("survival bound gamma={gamma}"),
            ok,
            format!("{} worlds, max gap {worst_gap:.3e}, min slack {worst_slack:.3e}", worlds.len()),
        ));
    }
    Ok(rows)
}

/// Random binary-cost trajectories of length `1..=max_len`, each with its
/// own cost rate.
pub fn random_cost_trajectories(n: usize, max_len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=max_len);
            let p: f64 = rng.random_range(0.0..0.5);
            (0..len).map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 }).collect()
        })
        .collect()
}

pub fn smoothness_row(report: &SmoothnessReport) -> CheckRow {
    CheckRow::new(
        format!("smoothness audit ({:?})", report.convention).to_lowercase(),
        report.violations == 0,
        format!(
            "{} trajectories, {} violations, mean L(F) {:.4}, mean L(V) {:.4}",
            report.feasibility.len(),
            report.violations,
            report.mean_feasibility,
            report.mean_cost_value
        ),
    )
}

/// `F_hat(t) <= V_hat_c(t)` at every index. The ordering is stated for the
/// discounted maximum, so the undiscounted form does not qualify.
pub fn ordering_row(report: &SmoothnessReport) -> Option<CheckRow> {
    (report.convention != Convention::Appendix).then(|| {
        CheckRow::new(
            format!("pointwise F <= V ({})", format!("{:?}", report.convention).to_lowercase()),
            report.ordering_violations == 0,
            format!("{} violations", report.ordering_violations),
        )
    })
}

/// Largest deviation from the single-cost closed forms over every `T <=
/// max_len` and cost index.
pub fn closed_form_check(max_len: usize, gamma: f64) -> Result<CheckRow> {
    let mut worst = 0.0f64;
    for t in 1..=max_len {
        for i0 in 1..=t {
            let mut c = vec![0.0; t];
            c[i0 - 1] = 1.0;
            let r = prop2_audit_costs(&[c], gamma, Convention::Appendix)?;
            let (lf, lv) = single_cost_closed_forms(t, i0, gamma);
            worst = worst.max((r.feasibility[0] - lf).abs()).max((r.cost_value[0] - lv).abs());
        }
    }
    Ok(CheckRow::new("single-cost closed forms", worst <= 1e-12, format!("max error {worst:.3e}")))
}

pub fn two_hot_check(samples: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins = Bins::feasibility(DEFAULT_BINS);
    let (mut worst_e, mut worst_kl) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let v: f64 = rng.random_range(-0.5..1.5);
        let d = two_hot_project(v, &bins)?;
        worst_e = worst_e.max((d.expectation() - bins.clip(v)).abs());
        worst_kl = worst_kl.max(d.kl(&d).abs());
    }
    Ok(vec![
        CheckRow::new("two-hot expectation", worst_e <= 1e-12, format!("{samples} values, max error {worst_e:.3e}")),
        CheckRow::new("two-hot self KL", worst_kl <= 1e-12, format!("max {worst_kl:.3e}")),
    ])
}

/// `F <= min(1, Q_c)` on the configured gridworld under the uniform policy.
pub fn grid_ordering_check(env: &GridHazardEnv, gamma: f64) -> Result<CheckRow> {
    let cmdp = env.to_cmdp(gamma, 0.0)?;
    let pi = TabularPolicy::uniform(cmdp.state_dim, cmdp.action_dim);
    let f = exact_feasibility(&cmdp, &pi, gamma, 1e-12)?;
    let q = exact_cost_value(&cmdp, &pi, gamma, 1e-12)?;
    let mut worst = f64::NEG_INFINITY;
    for s in 0..cmdp.state_dim {
        for a in 0..cmdp.action_dim {
            worst = worst.max(f.get(s, a) - q.get(s, a).min(1.0));
        }
    }
    Ok(CheckRow::new(
        "grid F <= min(1, Q_c)",
        worst <= 1e-9,
        format!("{}x{} grid, max excess {worst:.3e}", env.width, env.height),
    ))
}

/// The whole oracle suite.
pub fn run_oracle_suite(cfg: &OracleConfig, convention: Convention, grid: Option<&GridHazardEnv>) -> Result<Vec<CheckRow>> {
    let mut rows = survival_bound_check(cfg.bound_instances, &cfg.bound_gammas, cfg.bound_max_height, cfg.seed)?;
    let c = contraction_check(cfg.contraction_applications, cfg.seed, cfg.op_gamma);
    rows.push(CheckRow::new(
        "feasibility contraction",
        c.passed(),
        format!("{} applications, {} violations, worst ratio {:.6}", c.applications, c.violations, c.worst_ratio),
    ));
    let trajs = random_cost_trajectories(cfg.audit_trajectories, cfg.audit_max_len, cfg.seed);
    let audit = prop2_audit_costs(&trajs, cfg.audit_gamma, convention)?;
    rows.push(smoothness_row(&audit));
    let relative = if convention == Convention::Relative {
        audit
    } else {
        prop2_audit_costs(&trajs, cfg.audit_gamma, Convention::Relative)?
    };
    rows.extend(ordering_row(&relative));
    rows.push(closed_form_check(cfg.audit_max_len, cfg.audit_gamma)?);
    rows.extend(two_hot_check(cfg.two_hot_samples, cfg.seed)?);
    if let Some(g) = grid {
        rows.push(grid_ordering_check(g, cfg.audit_gamma)?);
    }
    Ok(rows)
}
