//! Exact feasibility and cost values on the built-in hazard grid, and the
//! survival bound on a random drift gridworld.
//!
//! cargo run --release --example oracle_gridworld

use fcsrl::envs::GridHazardEnv;
use fcsrl::oracle::{exact_cost_value, exact_feasibility, instances, safe_probability, TabularPolicy};
use rand::SeedableRng;

fn main() -> fcsrl::Result<()> {
    let gamma = 0.99;
    let env = GridHazardEnv::six_by_six();
    print!("{}", env.render_ascii());
    let cmdp = env.to_cmdp(gamma, 0.0)?;
    let pi = TabularPolicy::uniform(cmdp.state_dim, cmdp.action_dim);
    let f = exact_feasibility(&cmdp, &pi, gamma, 1e-12)?;
    let q = exact_cost_value(&cmdp, &pi, gamma, 1e-12)?;
    println!("\npolicy-marginal F / Q_c under the uniform policy:");
    for y in 0..env.height {
        let row: Vec<String> = (0..env.width)
            .map(|x| {
                let s = y * env.width + x;
                let m = |t: &dyn Fn(usize) -> f64| (0..cmdp.action_dim).map(|a| pi.prob(s, a) * t(a)).sum::<f64>();
                format!("{:.2}/{:5.2}", m(&|a| f.get(s, a)), m(&|a| q.get(s, a)))
            })
            .collect();
        println!("{}", row.join("  "));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let drift = instances::drift_gridworld(5, 6, 5, 0.2, gamma, &mut rng);
    let pi = TabularPolicy::random(drift.state_dim, 3, &mut rng);
    let safe = safe_probability(&drift, &pi, 6)?;
    println!("\ndrift gridworld, horizon 6: max |(1 - F) - P(all safe)| against (1 - gamma) * 6");
    for g in [0.9, 0.99, 0.999] {
        let f = exact_feasibility(&drift, &pi, g, 1e-13)?;
        let gap = (0..drift.state_dim)
            .flat_map(|s| (0..3).map(move |a| (s, a)))
            .map(|(s, a)| (1.0 - f.get(s, a) - safe.get(s, a)).abs())
            .fold(0.0, f64::max);
        println!("gamma {g:<6} gap {gap:.2e}  bound {:.2e}", (1.0 - g) * 6.0);
    }
    Ok(())
}
