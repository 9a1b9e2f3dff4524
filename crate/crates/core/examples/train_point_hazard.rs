//! Trains the off-policy agent on the point-mass hazard task and compares
//! it against a random policy.
//!
//! cargo run --release --example train_point_hazard -- [steps] [seed] [lambda_fea] [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use fcsrl::agent::{evaluate, random_policy_baseline, train_loop, TrainConfig, TrainOptions};
use fcsrl::envs::PointHazard2DEnv;

fn main() -> fcsrl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let defaults = TrainConfig::desk();
    let steps = args.first().and_then(|s| s.parse().ok()).unwrap_or(defaults.steps);
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let lambda_fea = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(defaults.lambda_fea);
    let out_dir = args.get(3).map(PathBuf::from);
    let env = PointHazard2DEnv::default();
    let cfg = TrainConfig {
        steps,
        lambda_fea,
        ..defaults
    };
    let t0 = Instant::now();
    let out = train_loop(&env, &cfg, seed, &TrainOptions { out_dir, trace_limit: 0 })?;
    println!("trained {} steps ({} updates) in {:.1}s", out.env_steps, out.updates, t0.elapsed().as_secs_f64());
    for chunk in out.metrics.chunks((out.metrics.len() / 10).max(1)) {
        let n = chunk.len() as f64;
        let r: f64 = chunk.iter().map(|m| m.reward).sum::<f64>() / n;
        let c: f64 = chunk.iter().map(|m| m.cost).sum::<f64>() / n;
        let last = chunk.last().unwrap();
        println!("step {:>7}  reward {r:>7.3}  cost {c:>6.2}  lambda {:.3}", last.step, last.lambda);
    }
    let trained = evaluate(&out.agent, &env, 20, 1000)?;
    let random = random_policy_baseline(&env, 20, 1000)?;
    println!("trained: reward {:.3}, cost {:.2} (limit {})", trained.reward, trained.cost, cfg.epsilon);
    println!("random:  reward {:.3}, cost {:.2}", random.reward, random.cost);
    if let Some(ckpt) = out.checkpoints.last() {
        println!("final checkpoint: {}", ckpt.display());
    }
    Ok(())
}
