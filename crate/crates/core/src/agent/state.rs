use rand::Rng;

use super::config::{Flavor, InputMode, TrainConfig};
use super::losses::{self, CriticPair};
use super::pid::PidState;
use crate::cmdp::TransitionBatch;
use crate::error::{Error, Result};
use crate::nn::{ema_update, hcat, Activation, AdamConfig, AdamState, Mat, Mlp, ParamFile};
use crate::repr::{two_hot_matrix, Bins, ReprStack};

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    let src: Vec<Mat> = online.params().into_iter().cloned().collect();
    let refs: Vec<&Mat> = src.iter().collect();
    ema_update(&mut target.params_mut(), &refs, tau)
}

/// Policy, critics, multiplier and the representation stack they read from.
///
/// Off-policy critics score `(x, a)`; on-policy critics score `x` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub flavor: Flavor,
    pub input_mode: InputMode,
    pub state_dim: usize,
    pub action_dim: usize,
    pub gamma: f64,
    pub repr: ReprStack,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub reward_critic: Mlp,
    pub reward_target: Mlp,
    pub cost_critic: Mlp,
    pub cost_target: Mlp,
    pub cost_bins: Bins,
    pub lambda: f64,
    pub pid: PidState,
    /// Weight of the pre-tanh penalty in the actor loss.
    pub actor_reg: f64,
}

/// One Adam state per trained component.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub repr: AdamState,
    pub actor: AdamState,
    pub reward: AdamState,
    pub cost: AdamState,
}

/// Critic losses of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLosses {
    pub reward: f64,
    pub cost: f64,
}

impl AgentState {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let repr = ReprStack::new(state_dim, action_dim, cfg.gamma, cfg.repr_config(), rng)?;
        let x = cfg.input_mode.input_dim(state_dim, cfg.z_dim);
        let critic_in = match cfg.flavor {
            Flavor::Offpolicy => x + action_dim,
            Flavor::Onpolicy => x,
        };
        let (relu, id) = (Activation::Relu, Activation::Identity);
        let actor = Mlp::new(&sizes(x, &cfg.rl_hidden, action_dim), relu, Activation::Tanh, rng);
        let reward_critic = Mlp::new(&sizes(critic_in, &cfg.rl_hidden, 1), relu, id, rng);
        let cost_critic = Mlp::new(&sizes(critic_in, &cfg.rl_hidden, cfg.n_bins), relu, id, rng);
        let [kp, ki, kd] = cfg.pid_gains;
        Ok(Self {
            flavor: cfg.flavor,
            input_mode: cfg.input_mode,
            state_dim,
            action_dim,
            gamma: cfg.gamma,
            repr,
            actor_target: actor.clone(),
            actor,
            reward_target: reward_critic.clone(),
            reward_critic,
            cost_target: cost_critic.clone(),
            cost_critic,
            cost_bins: Bins::cost_value(cfg.n_bins, cfg.gamma),
            lambda: cfg.freeze_lambda.unwrap_or(0.0),
            pid: PidState::new(kp, ki, kd)?,
            actor_reg: cfg.actor_reg,
        })
    }

    pub fn optimizers(&self, lr: f64) -> Optimizers {
        let cfg = AdamConfig { lr, ..AdamConfig::default() };
        Optimizers {
            repr: self.repr.optimizer(cfg),
            actor: AdamState::for_params(&self.actor.params(), cfg),
            reward: AdamState::for_params(&self.reward_critic.params(), cfg),
            cost: AdamState::for_params(&self.cost_critic.params(), cfg),
        }
    }

    /// Policy and critic inputs built from `g^(m)`.
    pub fn inputs(&self, states: &Mat) -> Result<Mat> {
        if states.ncols() != self.state_dim {
            return Err(Error::shape(format!("state width {}", self.state_dim), states.ncols()));
        }
        Ok(match self.input_mode {
            InputMode::StateAndZ => hcat(states, &self.repr.encode_target(states)?),
            InputMode::ZOnly => self.repr.encode_target(states)?,
            InputMode::StateOnly => states.clone(),
        })
    }

    /// Deterministic action in `[-1, 1]^d`.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        let s = Mat::from_shape_vec((1, state.len()), state.to_vec()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(self.actor.forward(&self.inputs(&s)?)?.row(0).to_vec())
    }

    pub fn critics(&self) -> CriticPair<'_> {
        CriticPair {
            reward: &self.reward_critic,
            cost: &self.cost_critic,
            cost_bins: &self.cost_bins,
        }
    }

    fn critic_input(&self, x: &Mat, actions: Option<&Mat>) -> Mat {
        match (self.flavor, actions) {
            (Flavor::Offpolicy, Some(a)) => hcat(x, a),
            _ => x.clone(),
        }
    }

    /// Bootstrapped `(reward, cost value)` targets of a single-step batch:
    /// `r + gamma Q_r'(x', pi'(x'))` and `c + gamma E[Q_c'(x', pi'(x'))]`,
    /// dropping the bootstrap at true terminals.
    pub fn td_targets(&self, step: &TransitionBatch, next_inputs: &Mat) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.flavor != Flavor::Offpolicy {
            return Err(Error::InvalidArgument("TD targets belong to the off-policy flavor".into()));
        }
        let next_a = self.actor_target.forward(next_inputs)?;
        let xa = hcat(next_inputs, &next_a);
        let qr = self.reward_target.forward(&xa)?;
        let qc = losses::cost_expectation(&self.cost_target, &self.cost_bins, &xa)?;
        let n = next_inputs.nrows();
        let (mut yr, mut yc) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let cont = if step.terminated[0][i] { 0.0 } else { self.gamma };
            yr.push(step.rewards[0][i] + cont * qr[[i, 0]]);
            yc.push(step.costs[0][i] + cont * qc[i]);
        }
        Ok((yr, yc))
    }

    /// One Adam step on both critics toward fixed scalar targets.
    pub fn critic_step(
        &mut self,
        inputs: &Mat,
        actions: Option<&Mat>,
        reward_targets: &[f64],
        cost_targets: &[f64],
        opt: &mut Optimizers,
    ) -> Result<CriticLosses> {
        let input = self.critic_input(inputs, actions);
        let probs = two_hot_matrix(cost_targets, &self.cost_bins)?;
        let (lr, gr) = losses::reward_critic_grad(&self.reward_critic, &input, reward_targets)?;
        let (lc, gc) = losses::cost_critic_grad(&self.cost_critic, &input, &probs)?;
        opt.reward.step(&mut self.reward_critic.params_mut(), &gr)?;
        opt.cost.step(&mut self.cost_critic.params_mut(), &gc)?;
        Ok(CriticLosses { reward: lr, cost: lc })
    }

    /// Off-policy critic update on step 0 of `batch` followed by the soft
    /// update of the critic targets.
    pub fn critic_update(&mut self, batch: &TransitionBatch, inputs: &Mat, next_inputs: &Mat, tau: f64, opt: &mut Optimizers) -> Result<CriticLosses> {
        let step = batch.step(0);
        let (yr, yc) = self.td_targets(&step, next_inputs)?;
        let l = self.critic_step(inputs, Some(&step.actions[0]), &yr, &yc, opt)?;
        soft_update(&mut self.reward_target, &self.reward_critic, tau)?;
        soft_update(&mut self.cost_target, &self.cost_critic, tau)?;
        Ok(l)
    }

    /// Soft update of the target actor.
    pub fn update_actor_target(&mut self, tau: f64) -> Result<()> {
        soft_update(&mut self.actor_target, &self.actor, tau)
    }

    pub fn actor_loss(&self, inputs: &Mat) -> Result<f64> {
        losses::actor_loss(&self.actor, self.critics(), inputs, self.lambda, self.actor_reg)
    }

    /// One Adam step on the actor; critics are read, not trained.
    pub fn actor_update(&mut self, inputs: &Mat, opt: &mut Optimizers) -> Result<f64> {
        let (l, g) = losses::actor_grad(&self.actor, self.critics(), inputs, self.lambda, self.actor_reg)?;
        opt.actor.step(&mut self.actor.params_mut(), &g)?;
        Ok(l)
    }

    pub fn to_param_file(&self, lambda_fea: f64) -> ParamFile {
        let mut f = self.repr.to_param_file(lambda_fea);
        f.push_mlp("agent.actor", &self.actor);
        f.push_mlp("agent.actor_target", &self.actor_target);
        f.push_mlp("agent.reward_critic", &self.reward_critic);
        f.push_mlp("agent.reward_target", &self.reward_target);
        f.push_mlp("agent.cost_critic", &self.cost_critic);
        f.push_mlp("agent.cost_target", &self.cost_target);
        f.set_meta("agent.flavor", self.flavor);
        f.set_meta("agent.input_mode", self.input_mode);
        f.set_meta("agent.dims", [self.state_dim, self.action_dim]);
        f.set_meta("agent.gamma", self.gamma);
        f.set_meta("agent.cost_bins", self.cost_bins);
        f.set_meta("agent.lambda", self.lambda);
        f.set_meta("agent.pid", self.pid);
        f.set_meta("agent.actor_reg", self.actor_reg);
        f
    }

    pub fn from_param_file(f: &ParamFile) -> Result<Self> {
        let (repr, _) = ReprStack::from_param_file(f)?;
        let dims: [usize; 2] = f.meta("agent.dims")?;
        Ok(Self {
            flavor: f.meta("agent.flavor")?,
            input_mode: f.meta("agent.input_mode")?,
            state_dim: dims[0],
            action_dim: dims[1],
            gamma: f.meta("agent.gamma")?,
            repr,
            actor: f.mlp("agent.actor")?,
            actor_target: f.mlp("agent.actor_target")?,
            reward_critic: f.mlp("agent.reward_critic")?,
            reward_target: f.mlp("agent.reward_target")?,
            cost_critic: f.mlp("agent.cost_critic")?,
            cost_target: f.mlp("agent.cost_target")?,
            cost_bins: f.meta("agent.cost_bins")?,
            lambda: f.meta("agent.lambda")?,
            pid: f.meta("agent.pid")?,
            actor_reg: f.meta("agent.actor_reg")?,
        })
    }
}
