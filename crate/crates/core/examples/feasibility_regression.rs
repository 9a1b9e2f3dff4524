//! Neural feasibility regression on the 6x6 hazard grid against the exact
//! fixed point, for the uniform policy.
//!
//! cargo run --release --example feasibility_regression

use fcsrl::envs::GridHazardEnv;
use fcsrl::oracle::{exact_feasibility, TabularPolicy};
use fcsrl::repr::{fit_tabular_feasibility, TabularFitConfig};
use rand::SeedableRng;

fn main() -> fcsrl::Result<()> {
    let gamma = 0.99;
    let env = GridHazardEnv::six_by_six();
    let cmdp = env.to_cmdp(gamma, 0.0)?;
    let mdp = cmdp.as_finite()?;
    let pi = TabularPolicy::uniform(mdp.n_states, mdp.n_actions);
    let exact = exact_feasibility(&cmdp, &pi, gamma, 1e-12)?;

    let t0 = std::time::Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let fit = fit_tabular_feasibility(mdp, &pi, gamma, &TabularFitConfig::default(), &mut rng)?;

    let mut worst = 0.0f64;
    println!("{}", env.render_ascii());
    for y in 0..env.height {
        let row: Vec<String> = (0..env.width)
            .map(|x| {
                let s = y * env.width + x;
                let marginal: f64 = (0..mdp.n_actions).map(|a| pi.prob(s, a) * exact.get(s, a)).sum();
                worst = worst.max((fit.values[s] - marginal).abs());
                format!("{:.2}/{:.2}", fit.values[s], marginal)
            })
            .collect();
        println!("{}", row.join("  "));
    }
    println!(
        "fitted/exact above; sup error {worst:.4} after {} syncs ({:.1}s, last change {:.1e})",
        fit.syncs,
        t0.elapsed().as_secs_f64(),
        fit.last_change
    );
    Ok(())
}
