//! Feasibility-head and cost-critic landscapes over the arena, with the
//! hazard contrast of each.
//!
//! cargo run --release --example landscape -- [checkpoint_dir] [out_dir]
//!
//! Without a checkpoint (or with `-`) a short training run provides one.

use std::fs;
use std::path::PathBuf;

use fcsrl::agent::{load_checkpoint, train_loop, TrainConfig, TrainOptions};
use fcsrl::analysis::{landscape_cost_critic, landscape_head};
use fcsrl::envs::PointHazard2DEnv;

fn main() -> fcsrl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let env = PointHazard2DEnv::default();
    let agent = match args.first().filter(|p| !p.is_empty() && *p != "-") {
        Some(p) => load_checkpoint(p.as_ref())?.0,
        None => {
            let cfg = TrainConfig {
                steps: 20_000,
                ..TrainConfig::desk()
            };
            train_loop(&env, &cfg, 0, &TrainOptions::default())?.agent
        }
    };
    let out = PathBuf::from(args.get(1).map_or("runs/landscape-example", String::as_str));
    fs::create_dir_all(&out).map_err(|e| fcsrl::Error::Format(e.to_string()))?;
    let id = args.first().cloned().unwrap_or_else(|| "fresh".into());
    for grid in [
        landscape_head(&agent.repr, &env, 30, &[0.0, 0.0], &id)?,
        landscape_cost_critic(&agent, &env, 30, &[0.0, 0.0], &id)?,
    ] {
        let c = grid.hazard_contrast(&env);
        let name = grid.kind.file_name();
        fs::write(out.join(name), grid.to_csv()).map_err(|e| fcsrl::Error::Format(e.to_string()))?;
        println!("{name}: hazard mean {:.3}, free mean {:.3}, gap {:.3}", c.hazard_mean, c.free_mean, c.gap());
        let top = grid.values.iter().fold(f64::MIN_POSITIVE, |m, &v| m.max(v));
        for j in (0..grid.ys.len()).rev().step_by(3) {
            let row: String = (0..grid.xs.len())
                .step_by(2)
                .map(|i| {
                    let v = grid.get(i, j) / top;
                    [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'][((v.clamp(0.0, 0.999)) * 10.0) as usize]
                })
                .collect();
            println!("  |{row}|");
        }
    }
    println!("CSV written to {}", out.display());
    Ok(())
}
