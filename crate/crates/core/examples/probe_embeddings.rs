//! Linear probes of encoders trained with the feasibility head and with the
//! cost-value head, on states from a noisy goal-seeking policy.
//!
//! cargo run --release --example probe_embeddings -- [steps] [seed]

use fcsrl::agent::{train_loop, TrainConfig, TrainOptions};
use fcsrl::analysis::{probe_dataset, probe_embedding};
use fcsrl::envs::PointHazard2DEnv;
use fcsrl::repr::HeadVariant;

fn main() -> fcsrl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps = args.first().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let env = PointHazard2DEnv::default();
    let base = TrainConfig {
        steps,
        ..TrainConfig::desk()
    };
    let (states, feasibility) = probe_dataset(&env, 40, 0.6, base.gamma, HeadVariant::Feasibility, 7)?;
    let (_, cost_value) = probe_dataset(&env, 40, 0.6, base.gamma, HeadVariant::CostValue, 7)?;
    println!("{} probe states", states.nrows());
    for head in [HeadVariant::Feasibility, HeadVariant::CostValue] {
        let cfg = TrainConfig { head, ..base.clone() };
        let agent = train_loop(&env, &cfg, seed, &TrainOptions::default())?.agent;
        let f = probe_embedding(&agent.repr.target_encoder, &states, &feasibility)?;
        let v = probe_embedding(&agent.repr.target_encoder, &states, &cost_value)?;
        println!(
            "{head:?} encoder: feasibility probe test MSE {:.4}, cost-value probe test MSE {:.4}",
            f.test_mse, v.test_mse
        );
    }
    Ok(())
}
