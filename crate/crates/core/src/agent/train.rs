use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{Flavor, TrainConfig};
use super::losses;
use super::onpolicy::{episode_targets, mc_window_batch};
use super::state::{AgentState, Optimizers};
use crate::cmdp::{ReplayBuffer, Trajectory};
use crate::envs::{run_episode, Environment};
use crate::error::{Error, Result};
use crate::nn::Mat;
use crate::repr::ReprLossReport;
use crate::seed::{RngPosition, SeedStreams, Stream};

/// Steps of one training iteration, in the order they must occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Collect,
    Sample,
    ReprUpdate,
    Ema,
    Encode,
    CriticUpdate,
    ActorUpdate,
    LambdaUpdate,
}

pub const METRICS_HEADER: &str = "step,episode,reward,cost,lambda,loss_dyn,loss_fea,loss_actor,loss_critic_r,loss_critic_c";

/// One completed episode. Losses are means over the updates since the
/// previous row (0 when there were none).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub episode: usize,
    pub reward: f64,
    pub cost: f64,
    pub lambda: f64,
    pub loss_dyn: f64,
    pub loss_fea: f64,
    pub loss_actor: f64,
    pub loss_critic_r: f64,
    pub loss_critic_c: f64,
}

impl MetricRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.episode,
            self.reward,
            self.cost,
            self.lambda,
            self.loss_dyn,
            self.loss_fea,
            self.loss_actor,
            self.loss_critic_r,
            self.loss_critic_c
        )
    }
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, Default)]
struct LossAcc {
    sums: [f64; 5],
    n: usize,
}

impl LossAcc {
    fn add(&mut self, repr: Option<&ReprLossReport>, actor: f64, critic_r: f64, critic_c: f64) {
        let (d, f) = repr.map_or((0.0, 0.0), |r| (r.dynamics, r.head));
        for (s, v) in self.sums.iter_mut().zip([d, f, actor, critic_r, critic_c]) {
            *s += v;
        }
        self.n += 1;
    }

    fn take(&mut self) -> [f64; 5] {
        let out = if self.n == 0 {
            [0.0; 5]
        } else {
            self.sums.map(|s| s / self.n as f64)
        };
        *self = Self::default();
        out
    }
}

/// Where and how a run writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Metrics, checkpoints and divergence snapshots go here when set.
    pub out_dir: Option<PathBuf>,
    /// Keep at most this many phase-trace entries.
    pub trace_limit: usize,
}

/// Deterministic evaluation summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub reward: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub reward: f64,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub agent: AgentState,
    pub metrics: Vec<MetricRow>,
    pub evals: Vec<EvalPoint>,
    pub trace: Vec<Phase>,
    pub env_steps: usize,
    pub updates: usize,
    pub checkpoints: Vec<PathBuf>,
}

/// `(R - R_l) / (R_h - R_l)`.
pub fn normalized_reward(reward: f64, r_low: f64, r_high: f64) -> Result<f64> {
    if r_high == r_low {
        return Err(Error::InvalidArgument("normalisation needs R_h != R_l".into()));
    }
    Ok((reward - r_low) / (r_high - r_low))
}

/// `C / epsilon`.
pub fn normalized_cost(cost: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("cost limit must be positive, got {epsilon}")));
    }
    Ok(cost / epsilon)
}

fn mean_returns(episodes: &[Trajectory]) -> EvalReport {
    let n = episodes.len().max(1) as f64;
    EvalReport {
        episodes: episodes.len(),
        reward: episodes.iter().map(|t| t.episode_return_r()).sum::<f64>() / n,
        cost: episodes.iter().map(|t| t.episode_return_c()).sum::<f64>() / n,
    }
}

/// Noise-free rollouts of the actor; resets come from the evaluation stream
/// of `seed`.
pub fn evaluate<E: Environment + ?Sized>(agent: &AgentState, env: &E, episodes: usize, seed: u64) -> Result<EvalReport> {
    let mut rng = SeedStreams::new(seed).rng(Stream::Evaluation);
    let eps = (0..episodes)
        .map(|_| run_episode(env, |s, _| agent.act(s), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_returns(&eps))
}

/// Uniform random actions in `[-1, 1]^d`.
pub fn random_policy_baseline<E: Environment + ?Sized>(env: &E, episodes: usize, seed: u64) -> Result<EvalReport> {
    let mut rng = SeedStreams::new(seed).rng(Stream::Evaluation);
    let d = env.action_dim();
    let eps = (0..episodes)
        .map(|_| run_episode(env, |_, r| Ok((0..d).map(|_| r.random_range(-1.0..=1.0)).collect()), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_returns(&eps))
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    seed: u64,
    opts: &'a TrainOptions,
    trace: Vec<Phase>,
    metrics: Vec<MetricRow>,
    metrics_file: Option<fs::File>,
    checkpoints: Vec<PathBuf>,
    acc: LossAcc,
    updates: usize,
}

impl Run<'_> {
    fn phase(&mut self, p: Phase) {
        if self.trace.len() < self.opts.trace_limit {
            self.trace.push(p);
        }
    }

    fn row(&mut self, row: MetricRow) -> Result<()> {
        if let Some(f) = self.metrics_file.as_mut() {
            writeln!(f, "{}", row.csv_line()).map_err(|e| Error::io("metrics.csv", e))?;
        }
        self.metrics.push(row);
        Ok(())
    }

    fn episode_row(&mut self, step: usize, episode: usize, reward: f64, cost: f64, lambda: f64) -> Result<()> {
        let losses = self.acc.take();
        self.row_with(step, episode, reward, cost, lambda, losses)
    }

    fn row_with(&mut self, step: usize, episode: usize, reward: f64, cost: f64, lambda: f64, losses: [f64; 5]) -> Result<()> {
        let [loss_dyn, loss_fea, loss_actor, loss_critic_r, loss_critic_c] = losses;
        self.row(MetricRow {
            step,
            episode,
            reward,
            cost,
            lambda,
            loss_dyn,
            loss_fea,
            loss_actor,
            loss_critic_r,
            loss_critic_c,
        })
    }

    fn checkpoint(&mut self, step: usize, agent: &AgentState, rngs: &[(Stream, &ChaCha8Rng)]) -> Result<()> {
        let Some(out) = &self.opts.out_dir else { return Ok(()) };
        let dir = save_checkpoint(out, step, agent, self.cfg, self.seed, rngs)?;
        self.checkpoints.push(dir);
        Ok(())
    }

    /// Writes a snapshot next to the metrics and passes the error on.
    fn diverged(&mut self, err: Error, step: usize, agent: &AgentState) -> Error {
        if let Some(out) = &self.opts.out_dir {
            let snap = serde_json::json!({
                "step": step,
                "error": err.to_string(),
                "lambda": agent.lambda,
                "last_metrics": self.metrics.last(),
            });
            let _ = fs::write(out.join("diverged.json"), serde_json::to_string_pretty(&snap).unwrap_or_default());
            let _ = save_checkpoint(out, step, agent, self.cfg, self.seed, &[]);
        }
        err
    }
}

/// Writes `checkpoints/step-XXXXXXXX/{params.json, train_config.toml, rng.json}`.
pub fn save_checkpoint(
    out: &Path,
    step: usize,
    agent: &AgentState,
    cfg: &TrainConfig,
    seed: u64,
    rngs: &[(Stream, &ChaCha8Rng)],
) -> Result<PathBuf> {
    let dir = out.join("checkpoints").join(format!("step-{step:08}"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut params = agent.to_param_file(cfg.lambda_fea);
    params.set_meta("train.step", step);
    params.set_meta("train.seed", seed);
    params.set_meta("train.config", cfg);
    params.save(&dir.join("params.json"))?;
    let toml = toml::to_string(cfg).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join("train_config.toml"), toml).map_err(|e| Error::io(dir.join("train_config.toml"), e))?;
    let positions: Vec<(Stream, RngPosition)> = rngs.iter().map(|(s, r)| (*s, RngPosition::of(r))).collect();
    let rng_json = serde_json::to_string_pretty(&serde_json::json!({ "master_seed": seed, "streams": positions }))?;
    fs::write(dir.join("rng.json"), rng_json).map_err(|e| Error::io(dir.join("rng.json"), e))?;
    Ok(dir)
}

/// Restores an agent from a checkpoint directory (or its `params.json`).
pub fn load_checkpoint(path: &Path) -> Result<(AgentState, TrainConfig)> {
    let file = if path.is_dir() { path.join("params.json") } else { path.to_path_buf() };
    let params = crate::nn::ParamFile::load(&file)?;
    Ok((AgentState::from_param_file(&params)?, params.meta("train.config")?))
}

fn gaussian(sigma: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("noise sigma {sigma}: {e}")))
}

/// Runs the full training procedure for one seed.
///
/// Per iteration: collect, sample a K-step batch, representation update,
/// EMA of the target encoder, re-encode with it, critic update, actor
/// update, and the multiplier update once an episode (off-policy) or an
/// episode batch (on-policy) completes.
pub fn train_loop<E: Environment + ?Sized>(env: &E, cfg: &TrainConfig, seed: u64, opts: &TrainOptions) -> Result<TrainOutput> {
    cfg.validate()?;
    let streams = SeedStreams::new(seed);
    let mut init_rng = streams.rng(Stream::Init);
    let mut agent = AgentState::new(env.state_dim(), env.action_dim(), cfg, &mut init_rng)?;
    let mut opt = agent.optimizers(cfg.lr);

    let metrics_file = match &opts.out_dir {
        Some(out) => {
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let path = out.join("metrics.csv");
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{METRICS_HEADER}").map_err(|e| Error::io(&path, e))?;
            Some(f)
        }
        None => None,
    };
    let mut run = Run {
        cfg,
        seed,
        opts,
        trace: Vec::new(),
        metrics: Vec::new(),
        metrics_file,
        checkpoints: Vec::new(),
        acc: LossAcc::default(),
        updates: 0,
    };
    let mut rngs = [
        streams.rng(Stream::Env),
        streams.rng(Stream::Sampling),
        streams.rng(Stream::Exploration),
    ];
    run.checkpoint(0, &agent, &[])?;

    let result = match cfg.flavor {
        Flavor::Offpolicy => offpolicy(env, &mut agent, &mut opt, &mut run, &mut rngs),
        Flavor::Onpolicy => onpolicy(env, &mut agent, &mut opt, &mut run, &mut rngs),
    };
    let (env_steps, evals) = match result {
        Ok(v) => v,
        Err(e @ (Error::TrainingDiverged(_) | Error::NonFinite(_))) => {
            let step = run.metrics.last().map_or(0, |r| r.step);
            return Err(run.diverged(e, step, &agent));
        }
        Err(e) => return Err(e),
    };
    if env_steps > 0 {
        let named = [(Stream::Env, &rngs[0]), (Stream::Sampling, &rngs[1]), (Stream::Exploration, &rngs[2])];
        run.checkpoint(env_steps, &agent, &named)?;
    }
    if let Some(f) = run.metrics_file.as_mut() {
        f.flush().map_err(|e| Error::io("metrics.csv", e))?;
    }
    if let Some(out) = &opts.out_dir {
        if !evals.is_empty() {
            let mut s = String::from("step,reward,cost\n");
            for e in &evals {
                s.push_str(&format!("{},{},{}\n", e.step, e.reward, e.cost));
            }
            fs::write(out.join("evals.csv"), s).map_err(|e| Error::io(out.join("evals.csv"), e))?;
        }
    }
    Ok(TrainOutput {
        agent,
        metrics: run.metrics,
        evals,
        trace: run.trace,
        env_steps,
        updates: run.updates,
        checkpoints: run.checkpoints,
    })
}

fn lambda_update(agent: &mut AgentState, cfg: &TrainConfig, episode_cost: f64) {
    agent.lambda = match cfg.freeze_lambda {
        Some(l) => l,
        None => agent.pid.update(episode_cost, cfg.epsilon),
    };
}

fn maybe_eval<E: Environment + ?Sized>(
    env: &E,
    agent: &AgentState,
    cfg: &TrainConfig,
    seed: u64,
    step: usize,
    evals: &mut Vec<EvalPoint>,
) -> Result<()> {
    if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
        let r = evaluate(agent, env, cfg.eval_episodes, seed)?;
        evals.push(EvalPoint {
            step,
            reward: r.reward,
            cost: r.cost,
        });
    }
    Ok(())
}

fn offpolicy<E: Environment + ?Sized>(
    env: &E,
    agent: &mut AgentState,
    opt: &mut Optimizers,
    run: &mut Run<'_>,
    rngs: &mut [ChaCha8Rng; 3],
) -> Result<(usize, Vec<EvalPoint>)> {
    let cfg = run.cfg;
    let [env_rng, sample_rng, explore_rng] = rngs;
    let noise = gaussian((cfg.exploration_sigma * 2.0).max(f64::MIN_POSITIVE))?;
    let ad = env.action_dim();
    let mut buf = ReplayBuffer::new(cfg.buffer_capacity)?;
    let mut evals = Vec::new();
    let mut state = env.reset(env_rng as &mut dyn RngCore);
    let (mut ep_len, mut ep_r, mut ep_c, mut episode) = (0usize, 0.0, 0.0, 0usize);

    for step in 0..cfg.steps {
        run.phase(Phase::Collect);
        let action: Vec<f64> = if step < cfg.start_steps {
            (0..ad).map(|_| explore_rng.random_range(-1.0..=1.0)).collect()
        } else {
            let mut a = agent.act(&state)?;
            if cfg.exploration_sigma > 0.0 {
                for v in &mut a {
                    *v = (*v + noise.sample(explore_rng)).clamp(-1.0, 1.0);
                }
            }
            a
        };
        let mut tr = env.step(&state, &action)?;
        ep_len += 1;
        if !tr.done && ep_len == env.max_steps() {
            tr.truncated = true;
        }
        ep_r += tr.reward;
        ep_c += tr.cost.value();
        let ends = tr.ends_episode();
        state = tr.next_state.clone();
        buf.push_step(tr)?;

        let t = step + 1;
        if t >= cfg.update_after && t % cfg.update_every == 0 && !buf.valid_starts(cfg.k).is_empty() {
            for _ in 0..cfg.updates_per_round {
                offpolicy_update(agent, opt, run, &buf, sample_rng)?;
            }
        }
        if ends {
            run.phase(Phase::LambdaUpdate);
            lambda_update(agent, cfg, ep_c);
            run.episode_row(t, episode, ep_r, ep_c, agent.lambda)?;
            episode += 1;
            state = env.reset(env_rng as &mut dyn RngCore);
            (ep_len, ep_r, ep_c) = (0, 0.0, 0.0);
        }
        if cfg.checkpoint_every > 0 && t % cfg.checkpoint_every == 0 && t < cfg.steps {
            run.checkpoint(t, agent, &[])?;
        }
        maybe_eval(env, agent, cfg, run.seed, t, &mut evals)?;
    }
    Ok((cfg.steps, evals))
}

fn offpolicy_update(agent: &mut AgentState, opt: &mut Optimizers, run: &mut Run<'_>, buf: &ReplayBuffer, rng: &mut ChaCha8Rng) -> Result<()> {
    let cfg = run.cfg;
    run.phase(Phase::Sample);
    let batch = buf.sample_subtrajectories(cfg.batch_size, cfg.k, rng)?;
    let rep = if agent.input_mode.uses_z() {
        run.phase(Phase::ReprUpdate);
        let rep = agent.repr.repr_update(&batch, cfg.lambda_fea, &mut opt.repr)?;
        run.phase(Phase::Ema);
        agent.repr.update_target(cfg.tau)?;
        Some(rep)
    } else {
        None
    };
    run.phase(Phase::Encode);
    let x = agent.inputs(&batch.states[0])?;
    let xn = agent.inputs(&batch.states[1])?;
    run.phase(Phase::CriticUpdate);
    let cl = agent.critic_update(&batch, &x, &xn, cfg.critic_tau, opt)?;
    run.phase(Phase::ActorUpdate);
    let la = agent.actor_update(&x, opt)?;
    agent.update_actor_target(cfg.critic_tau)?;
    run.acc.add(rep.as_ref(), la, cl.reward, cl.cost);
    run.updates += 1;
    Ok(())
}

fn onpolicy<E: Environment + ?Sized>(
    env: &E,
    agent: &mut AgentState,
    opt: &mut Optimizers,
    run: &mut Run<'_>,
    rngs: &mut [ChaCha8Rng; 3],
) -> Result<(usize, Vec<EvalPoint>)> {
    let cfg = run.cfg;
    let [env_rng, sample_rng, explore_rng] = rngs;
    let noise = gaussian(cfg.policy_std)?;
    let mut evals = Vec::new();
    let (mut steps, mut episode) = (0usize, 0usize);

    while steps < cfg.steps {
        run.phase(Phase::Collect);
        let mut batch_eps = Vec::new();
        while batch_eps.len() < cfg.episodes_per_iteration && steps < cfg.steps {
            let tr = sample_episode(env, agent, &noise, env_rng, explore_rng)?;
            steps += tr.len();
            batch_eps.push(tr);
        }
        let targets: Vec<_> = batch_eps.iter().map(|t| episode_targets(t, cfg.gamma)).collect();
        for _ in 0..cfg.epochs_per_iteration {
            run.phase(Phase::Sample);
            let (batch, picks) = mc_window_batch(&batch_eps, &targets, cfg.batch_size, cfg.k, sample_rng)?;
            let rep = if agent.input_mode.uses_z() {
                run.phase(Phase::ReprUpdate);
                let rep = agent.repr.repr_update(&batch, cfg.lambda_fea, &mut opt.repr)?;
                run.phase(Phase::Ema);
                agent.repr.update_target(cfg.tau)?;
                Some(rep)
            } else {
                None
            };
            run.phase(Phase::Encode);
            let x = agent.inputs(&batch.states[0])?;
            let g_r: Vec<f64> = picks.iter().map(|&(e, t)| targets[e].reward_return[t]).collect();
            let g_c: Vec<f64> = picks.iter().map(|&(e, t)| targets[e].cost_value[t]).collect();
            run.phase(Phase::CriticUpdate);
            let cl = agent.critic_step(&x, None, &g_r, &g_c, opt)?;
            run.phase(Phase::ActorUpdate);
            let adv = advantages(agent, &x, &g_r, &g_c)?;
            let (la, grads) = losses::policy_gradient_grad(&agent.actor, &x, &batch.actions[0], &adv, cfg.policy_std)?;
            opt.actor.step(&mut agent.actor.params_mut(), &grads)?;
            run.acc.add(rep.as_ref(), la, cl.reward, cl.cost);
            run.updates += 1;
        }
        run.phase(Phase::LambdaUpdate);
        let mean_cost = batch_eps.iter().map(|t| t.episode_return_c()).sum::<f64>() / batch_eps.len() as f64;
        lambda_update(agent, cfg, mean_cost);
        // Every row of the batch carries the iteration's mean losses.
        let losses = run.acc.take();
        let start = steps - batch_eps.iter().map(|t| t.len()).sum::<usize>();
        let mut end = start;
        for tr in &batch_eps {
            end += tr.len();
            run.row_with(end, episode, tr.episode_return_r(), tr.episode_return_c(), agent.lambda, losses)?;
            episode += 1;
        }
        maybe_eval_every(env, agent, cfg, run.seed, start, steps, &mut evals)?;
    }
    Ok((steps, evals))
}

/// Evaluates once if a multiple of `eval_every` falls in `(from, to]`.
fn maybe_eval_every<E: Environment + ?Sized>(
    env: &E,
    agent: &AgentState,
    cfg: &TrainConfig,
    seed: u64,
    from: usize,
    to: usize,
    evals: &mut Vec<EvalPoint>,
) -> Result<()> {
    if cfg.eval_every == 0 || to / cfg.eval_every == from / cfg.eval_every {
        return Ok(());
    }
    let r = evaluate(agent, env, cfg.eval_episodes, seed)?;
    evals.push(EvalPoint {
        step: to,
        reward: r.reward,
        cost: r.cost,
    });
    Ok(())
}

/// `[(G_r - V_r) - lambda (G_c - E V_c)] / (1 + lambda)`.
fn advantages(agent: &AgentState, x: &Mat, g_r: &[f64], g_c: &[f64]) -> Result<Vec<f64>> {
    let vr = agent.reward_critic.forward(x)?;
    let vc = losses::cost_expectation(&agent.cost_critic, &agent.cost_bins, x)?;
    let l = agent.lambda;
    Ok((0..g_r.len())
        .map(|i| ((g_r[i] - vr[[i, 0]]) - l * (g_c[i] - vc[i])) / (1.0 + l))
        .collect())
}

/// Gaussian exploration around the actor mean. The recorded action is the
/// unclipped sample so the log-likelihood surrogate sees what was drawn.
fn sample_episode<E: Environment + ?Sized>(
    env: &E,
    agent: &AgentState,
    noise: &Normal<f64>,
    env_rng: &mut ChaCha8Rng,
    explore_rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let mut state = env.reset(env_rng as &mut dyn RngCore);
    let mut records = Vec::with_capacity(env.max_steps());
    for t in 0..env.max_steps() {
        let mut a = agent.act(&state)?;
        for v in &mut a {
            *v += noise.sample(explore_rng);
        }
        let mut tr = env.step(&state, &a)?;
        tr.action = a;
        if !tr.done && t + 1 == env.max_steps() {
            tr.truncated = true;
        }
        state = tr.next_state.clone();
        let stop = tr.done;
        records.push(tr);
        if stop {
            break;
        }
    }
    Trajectory::new(records)
}
