use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, RunConfig};
use super::manifest::{unix_now, write_atomic, RunManifest, CODE_VERSION};
use super::suite::{random_cost_trajectories, ordering_row, render_table, run_oracle_suite, smoothness_row};
use crate::agent::{
    evaluate, load_checkpoint, normalized_cost, normalized_reward, random_policy_baseline, train_loop, AgentState,
    TrainOptions,
};
use crate::analysis::{landscape_cost_critic, landscape_head, probe_dataset, probe_embedding, prop2_audit, prop2_audit_costs};
use crate::envs::{run_episode, PointHazard2DEnv};
use crate::error::{Error, Result};
use crate::oracle::Convention;
use crate::repr::HeadVariant;
use crate::seed::{SeedStreams, Stream};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    write_atomic(path, contents.as_ref())
}

fn checkpoint(path: &Path) -> Result<(AgentState, crate::agent::TrainConfig)> {
    let params = if path.is_dir() { path.join("params.json") } else { path.to_path_buf() };
    if !params.is_file() {
        return Err(Error::NotFound {
            what: "checkpoint",
            path: path.to_path_buf(),
        });
    }
    load_checkpoint(path)
}

/// Trains every configured seed under `output_dir/seed-<seed>/`.
pub fn cmd_train(cfg: &RunConfig) -> Result<i32> {
    let env = cfg.env.point()?;
    for &seed in &cfg.seeds {
        let dir = cfg.output_dir.join(format!("seed-{seed}"));
        let started = unix_now();
        log::info!("training seed {seed} for {} steps into {}", cfg.train.steps, dir.display());
        let opts = TrainOptions {
            out_dir: Some(dir.clone()),
            trace_limit: 0,
        };
        let out = train_loop(env, &cfg.train, seed, &opts)?;
        let final_eval = evaluate(&out.agent, env, cfg.train.eval_episodes, seed)?;
        let mut echo = cfg.clone();
        echo.seeds = vec![seed];
        write(&dir.join("run_config.toml"), echo.to_toml()?)?;
        let mut artifacts = vec![PathBuf::from("metrics.csv"), PathBuf::from("run_config.toml")];
        if !out.evals.is_empty() {
            artifacts.push(PathBuf::from("evals.csv"));
        }
        artifacts.extend(out.checkpoints.iter().filter_map(|c| c.strip_prefix(&dir).ok().map(Path::to_path_buf)));
        let manifest = RunManifest {
            code_version: CODE_VERSION.to_string(),
            seed,
            config: echo,
            started_unix: started,
            finished_unix: unix_now(),
            artifacts,
            final_metrics: serde_json::json!({
                "env_steps": out.env_steps,
                "updates": out.updates,
                "episodes": out.metrics.len(),
                "lambda": out.agent.lambda,
                "eval_reward": final_eval.reward,
                "eval_cost": final_eval.cost,
                "eval_episodes": final_eval.episodes,
            }),
        };
        manifest.write(&dir.join("manifest.json"))?;
        println!(
            "seed {seed}: {} steps, eval reward {:.3}, cost {:.3} -> {}",
            out.env_steps,
            final_eval.reward,
            final_eval.cost,
            dir.display()
        );
    }
    Ok(0)
}

/// Deterministic full-thrust flight to the goal, ignoring hazards.
pub fn goal_seeking_baseline(env: &PointHazard2DEnv, episodes: usize, seed: u64) -> Result<f64> {
    let mut rng = SeedStreams::new(seed).rng(Stream::Evaluation);
    let mut total = 0.0;
    for _ in 0..episodes {
        total += run_episode(env, |s, _| Ok(env.goal_direction(s).to_vec()), &mut rng)?.episode_return_r();
    }
    Ok(total / episodes.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub reward: f64,
    pub cost: f64,
    #[serde(rename = "NR")]
    pub nr: f64,
    #[serde(rename = "NC")]
    pub nc: f64,
    pub episodes: usize,
    pub seed: u64,
    pub r_low: f64,
    pub r_high: f64,
    pub epsilon: f64,
}

/// Normalised evaluation of a checkpoint. `R_l` defaults to the uniform
/// random policy and `R_h` to the hazard-blind goal-seeking policy.
pub fn evaluation(env: &PointHazard2DEnv, ckpt: &Path, episodes: usize, seed: u64, r_low: Option<f64>, r_high: Option<f64>) -> Result<Evaluation> {
    let (agent, tc) = checkpoint(ckpt)?;
    let r = evaluate(&agent, env, episodes, seed)?;
    let r_low = match r_low {
        Some(v) => v,
        None => random_policy_baseline(env, episodes, seed)?.reward,
    };
    let r_high = match r_high {
        Some(v) => v,
        None => goal_seeking_baseline(env, episodes, seed)?,
    };
    Ok(Evaluation {
        reward: r.reward,
        cost: r.cost,
        nr: normalized_reward(r.reward, r_low, r_high)?,
        nc: normalized_cost(r.cost, tc.epsilon)?,
        episodes,
        seed,
        r_low,
        r_high,
        epsilon: tc.epsilon,
    })
}

pub fn cmd_evaluate(cfg: &RunConfig, ckpt: &Path, episodes: usize, seed: u64, r_low: Option<f64>, r_high: Option<f64>) -> Result<i32> {
    let e = evaluation(cfg.env.point()?, ckpt, episodes, seed, r_low, r_high)?;
    let json = serde_json::to_string_pretty(&e)?;
    write(&cfg.output_dir.join("evaluation.json"), &json)?;
    println!("{json}");
    Ok(0)
}

/// Prints the pass/fail table; exit 1 if any check fails.
pub fn cmd_oracle_check(cfg: &RunConfig) -> Result<i32> {
    let grid = match &cfg.env {
        EnvConfig::GridHazard(g) => {
            println!("{}", g.render_ascii());
            Some(g)
        }
        EnvConfig::PointHazard(_) => None,
    };
    let rows = run_oracle_suite(&cfg.oracle, cfg.convention, grid)?;
    print!("{}", render_table(&rows));
    write(&cfg.output_dir.join("oracle_check.json"), serde_json::to_string_pretty(&rows)?)?;
    Ok(if rows.iter().all(|r| r.passed) { 0 } else { 1 })
}

/// Head landscape plus the cost-critic landscape of a checkpoint, velocity
/// fixed at zero.
pub fn cmd_landscape(cfg: &RunConfig, ckpt: &Path, resolution: Option<usize>) -> Result<i32> {
    let env = cfg.env.point()?;
    let (agent, _) = checkpoint(ckpt)?;
    let res = resolution.unwrap_or(cfg.analysis.landscape_resolution);
    let id = ckpt.display().to_string();
    let head = landscape_head(&agent.repr, env, res, &[0.0, 0.0], &id)?;
    let critic = landscape_cost_critic(&agent, env, res, &[0.0, 0.0], &id)?;
    let dir = cfg.output_dir.join("landscape");
    write(&dir.join(head.kind.file_name()), head.to_csv())?;
    write(&dir.join(critic.kind.file_name()), critic.to_csv())?;
    let summary = serde_json::json!({
        "head": head.summary(),
        "head_hazard_contrast": head.hazard_contrast(env),
        "cost_critic": critic.summary(),
        "cost_critic_hazard_contrast": critic.hazard_contrast(env),
    });
    let json = serde_json::to_string_pretty(&summary)?;
    write(&dir.join("landscape.json"), &json)?;
    println!("{json}");
    Ok(0)
}

/// Smoothness audit over random binary-cost trajectories, or over the noisy
/// rollouts of a checkpoint's policy when one is given. Exit 1 on a
/// violation under the convention the inequality is stated for.
pub fn cmd_smoothness(cfg: &RunConfig, ckpt: Option<&Path>, convention: Option<Convention>) -> Result<i32> {
    let conv = convention.unwrap_or(cfg.convention);
    let a = &cfg.analysis;
    let report = match ckpt {
        None => {
            let trajs = random_cost_trajectories(a.smoothness_trajectories, a.smoothness_max_len, cfg.oracle.seed);
            prop2_audit_costs(&trajs, cfg.oracle.audit_gamma, conv)?
        }
        Some(p) => {
            let env = cfg.env.point()?;
            let (agent, tc) = checkpoint(p)?;
            let normal = rand_distr::Normal::new(0.0, a.probe_noise).map_err(|e| Error::Config(e.to_string()))?;
            let mut rng = SeedStreams::new(cfg.oracle.seed).rng(Stream::Evaluation);
            let trajs = (0..a.smoothness_trajectories)
                .map(|_| {
                    run_episode(
                        env,
                        |s, r| {
                            let act = agent.act(s)?;
                            Ok(act.iter().map(|v| v + rand_distr::Distribution::sample(&normal, r)).collect())
                        },
                        &mut rng,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            prop2_audit(&trajs, tc.gamma, conv)?
        }
    };
    let dir = cfg.output_dir.join("smoothness");
    let mut csv = String::from("trajectory,l_feasibility,l_cost_value\n");
    for (i, (f, v)) in report.feasibility.iter().zip(&report.cost_value).enumerate() {
        csv.push_str(&format!("{i},{f},{v}\n"));
    }
    write(&dir.join("smoothness.csv"), csv)?;
    let summary = serde_json::json!({
        "convention": report.convention,
        "gamma": report.gamma,
        "trajectories": report.feasibility.len(),
        "mean_feasibility": report.mean_feasibility,
        "mean_cost_value": report.mean_cost_value,
        "violations": report.violations,
        "ordering_violations": report.ordering_violations,
    });
    write(&dir.join("smoothness.json"), serde_json::to_string_pretty(&summary)?)?;
    let mut rows = vec![smoothness_row(&report)];
    rows.extend(ordering_row(&report));
    print!("{}", render_table(&rows));
    let strict = conv == Convention::Appendix;
    Ok(if strict && !rows.iter().all(|r| r.passed) { 1 } else { 0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub checkpoint: String,
    pub head: HeadVariant,
    pub train_mse: f64,
    pub test_mse: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Linear probes of each checkpoint's target encoder on one shared dataset.
pub fn probe_rows(cfg: &RunConfig, ckpts: &[PathBuf], target: HeadVariant) -> Result<Vec<ProbeRow>> {
    let env = cfg.env.point()?;
    let loaded = ckpts.iter().map(|p| checkpoint(p)).collect::<Result<Vec<_>>>()?;
    let Some((first, _)) = loaded.first() else {
        return Err(Error::InvalidArgument("probe needs at least one checkpoint".into()));
    };
    let a = &cfg.analysis;
    let (states, targets) = probe_dataset(env, a.probe_episodes, a.probe_noise, first.gamma, target, a.probe_seed)?;
    loaded
        .iter()
        .zip(ckpts)
        .map(|((agent, _), p)| {
            let r = probe_embedding(&agent.repr.target_encoder, &states, &targets)?;
            Ok(ProbeRow {
                checkpoint: p.display().to_string(),
                head: agent.repr.config.head,
                train_mse: r.train_mse,
                test_mse: r.test_mse,
                n_train: r.n_train,
                n_test: r.n_test,
            })
        })
        .collect()
}

pub fn cmd_probe(cfg: &RunConfig, ckpts: &[PathBuf], target: HeadVariant) -> Result<i32> {
    let rows = probe_rows(cfg, ckpts, target)?;
    let json = serde_json::to_string_pretty(&serde_json::json!({ "target": target, "probes": rows }))?;
    let dir = cfg.output_dir.join("probe");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join("probe.json"), &json)?;
    println!("{json}");
    Ok(0)
}
