use fcsrl::cmdp::FiniteMdp;
use fcsrl::oracle::{
    contraction_check, contraction_sides, exact_cost_value, exact_feasibility, instances, mc_cost_value_costs, mc_feasibility_costs,
    safe_probability, sample_costs, Convention, TabularPolicy,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn is_absorbing(mdp: &FiniteMdp, s: usize) -> bool {
    (0..mdp.n_actions).all(|a| mdp.transitions[s][a] == [(s, 1.0)] && mdp.cost[s][a] == mdp.cost[s][0])
}

/// Expected `max_t gamma^t c_t` by walking every path until it reaches an
/// absorbing state, where the remaining maximum is known in closed form.
fn enumerate_feasibility(mdp: &FiniteMdp, pi: &TabularPolicy, s: usize, a: usize, t: i32, gamma: f64, best: f64) -> f64 {
    let here = best.max(gamma.powi(t) * mdp.cost[s][a]);
    if is_absorbing(mdp, s) {
        return here;
    }
    let mut total = 0.0;
    for &(sn, p) in &mdp.transitions[s][a] {
        for an in 0..mdp.n_actions {
            let q = pi.prob(sn, an);
            if p * q > 0.0 {
                total += p * q * enumerate_feasibility(mdp, pi, sn, an, t + 1, gamma, here);
            }
        }
    }
    total
}

#[test]
fn chain_feasibility_matches_enumeration() {
    for &p in &[0.0, 0.1, 0.3, 0.75, 1.0] {
        let cmdp = instances::chain(p);
        let mdp = cmdp.as_finite().unwrap();
        let pi = TabularPolicy::uniform(3, 1);
        let f = exact_feasibility(&cmdp, &pi, 0.9, 1e-12).unwrap();
        let e = enumerate_feasibility(mdp, &pi, 0, 0, 0, 0.9, 0.0);
        assert!((f.get(0, 0) - e).abs() < 1e-6, "p={p}: {} vs {e}", f.get(0, 0));
        assert!((e - 0.9 * p).abs() < 1e-12);
    }
}

#[test]
fn drift_world_feasibility_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cmdp = instances::drift_gridworld(4, 4, 3, 0.2, 0.95, &mut rng);
    let mdp = cmdp.as_finite().unwrap();
    let pi = TabularPolicy::random(mdp.n_states, mdp.n_actions, &mut rng);
    let f = exact_feasibility(&cmdp, &pi, 0.95, 1e-12).unwrap();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let e = enumerate_feasibility(mdp, &pi, s, a, 0, 0.95, 0.0);
            assert!((f.get(s, a) - e).abs() < 1e-9);
        }
    }
}

#[test]
fn cost_value_matches_monte_carlo() {
    let gamma = 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cmdp = instances::random_cmdp(5, 2, 0.3, gamma, &mut rng);
    let mdp = cmdp.as_finite().unwrap();
    let pi = TabularPolicy::random(5, 2, &mut rng);
    let q = exact_cost_value(&cmdp, &pi, gamma, 1e-12).unwrap();
    let f = exact_feasibility(&cmdp, &pi, gamma, 1e-12).unwrap();
    // gamma^250 < 4e-12, far below the standard error.
    let steps = 250;
    let n = 100_000;
    for (s0, a0) in [(0, 0), (3, 1)] {
        let (mut sv, mut sv2, mut sf, mut sf2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let costs = sample_costs(mdp, &pi, s0, a0, steps, &mut rng);
            let v = mc_cost_value_costs(&costs, 0, gamma, Convention::Relative).unwrap();
            let fv = mc_feasibility_costs(&costs, 0, gamma, Convention::Relative).unwrap();
            sv += v;
            sv2 += v * v;
            sf += fv;
            sf2 += fv * fv;
        }
        let nf = n as f64;
        let (mv, mf) = (sv / nf, sf / nf);
        let se_v = ((sv2 / nf - mv * mv) / nf).sqrt();
        let se_f = ((sf2 / nf - mf * mf) / nf).sqrt();
        assert!((mv - q.get(s0, a0)).abs() <= 3.0 * se_v, "V: {mv} vs {} (se {se_v})", q.get(s0, a0));
        assert!((mf - f.get(s0, a0)).abs() <= 3.0 * se_f, "F: {mf} vs {} (se {se_f})", f.get(s0, a0));
    }
}

#[test]
fn feasibility_is_below_min_of_one_and_cost_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let cmdp = instances::random_cmdp(6, 3, 0.25, 0.95, &mut rng);
        let pi = TabularPolicy::random(6, 3, &mut rng);
        let f = exact_feasibility(&cmdp, &pi, 0.95, 1e-11).unwrap();
        let q = exact_cost_value(&cmdp, &pi, 0.95, 1e-11).unwrap();
        for s in 0..6 {
            for a in 0..3 {
                assert!(f.get(s, a) <= q.get(s, a).min(1.0) + 1e-9);
                assert!(f.get(s, a) >= 0.0);
                assert!(q.get(s, a) <= 1.0 / 0.05 + 1e-9);
            }
        }
    }
}

/// Finite-horizon survival by dynamic programming, an independent route to
/// the enumeration.
fn survival_dp(mdp: &FiniteMdp, pi: &TabularPolicy, horizon: usize) -> Vec<Vec<f64>> {
    let safe = |s: usize, a: usize| 1.0 - mdp.cost[s][a];
    let mut p: Vec<Vec<f64>> = (0..mdp.n_states).map(|s| (0..mdp.n_actions).map(|a| safe(s, a)).collect()).collect();
    for _ in 0..horizon {
        let next: Vec<Vec<f64>> = (0..mdp.n_states)
            .map(|s| {
                (0..mdp.n_actions)
                    .map(|a| {
                        let e: f64 = mdp.transitions[s][a]
                            .iter()
                            .map(|&(sn, pr)| pr * (0..mdp.n_actions).map(|an| pi.prob(sn, an) * p[sn][an]).sum::<f64>())
                            .sum();
                        safe(s, a) * e
                    })
                    .collect()
            })
            .collect();
        p = next;
    }
    p
}

#[test]
fn safe_probability_matches_dynamic_programming() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let cmdp = instances::drift_gridworld(5, 5, 4, 0.3, 0.99, &mut rng);
        let mdp = cmdp.as_finite().unwrap();
        let pi = TabularPolicy::random(mdp.n_states, 3, &mut rng);
        let enumerated = safe_probability(&cmdp, &pi, 8).unwrap();
        let dp = survival_dp(mdp, &pi, 8);
        for s in 0..mdp.n_states {
            for a in 0..3 {
                assert!((enumerated.get(s, a) - dp[s][a]).abs() < 1e-12);
            }
        }
    }
    let chain = instances::hazard_chain(3, 0.1);
    let pi = TabularPolicy::uniform(chain.state_dim, 1);
    assert!((survival_dp(chain.as_finite().unwrap(), &pi, 3)[0][0] - 0.729).abs() < 1e-15);
}

#[test]
fn proposition_one_gap_shrinks_with_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cmdp = instances::drift_gridworld(5, 6, 4, 0.25, 0.99, &mut rng);
    let pi = TabularPolicy::random(cmdp.state_dim, 3, &mut rng);
    let safe = safe_probability(&cmdp, &pi, 6).unwrap();
    let mut gaps = Vec::new();
    for gamma in [0.9, 0.99, 0.999, 0.9999] {
        let f = exact_feasibility(&cmdp, &pi, gamma, 1e-12).unwrap();
        let gap = (0..cmdp.state_dim)
            .flat_map(|s| (0..3).map(move |a| (s, a)))
            .map(|(s, a)| (1.0 - f.get(s, a) - safe.get(s, a)).abs())
            .fold(0.0, f64::max);
        assert!(gap <= (1.0 - gamma) * 6.0 + 1e-9, "gamma {gamma}: gap {gap}");
        gaps.push(gap);
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn contraction_holds_on_random_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let gamma = rand::Rng::random_range(&mut rng, 0.5..0.999);
        let cmdp = instances::random_cmdp(6, 3, 0.4, gamma, &mut rng);
        let pi = TabularPolicy::random(6, 3, &mut rng);
        let f1 = instances::random_table(6, 3, &mut rng);
        let f2 = instances::random_table(6, 3, &mut rng);
        let (lhs, rhs) = contraction_sides(cmdp.as_finite().unwrap(), &pi, gamma, gamma, &f1, &f2);
        worst = worst.max(lhs - rhs);
    }
    assert!(worst <= 0.0, "worst excess {worst:e}");
}

#[test]
fn contraction_check_passes_and_detects_a_broken_operator() {
    let ok = contraction_check(100, 0, None);
    assert!(ok.passed(), "{ok:?}");
    assert!(ok.worst_ratio <= 1.0);
    let broken = contraction_check(100, 0, Some(1.01));
    assert!(!broken.passed());
    assert!(broken.worst_ratio > 1.0);
}
