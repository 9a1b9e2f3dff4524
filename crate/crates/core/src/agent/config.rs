use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repr::{HeadVariant, ReprConfig, DEFAULT_BINS};

/// Which base algorithm hosts the representation stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// Deterministic actor with a reward critic and a distributional cost
    /// critic, trained from replay.
    #[default]
    Offpolicy,
    /// Advantage actor-critic with Monte-Carlo targets.
    Onpolicy,
}

/// What the actor and critics read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// `[s, z^(m)(s)]`.
    #[default]
    StateAndZ,
    ZOnly,
    StateOnly,
}

impl InputMode {
    pub fn uses_z(self) -> bool {
        self != InputMode::StateOnly
    }

    pub fn input_dim(self, state_dim: usize, z_dim: usize) -> usize {
        match self {
            InputMode::StateAndZ => state_dim + z_dim,
            InputMode::ZOnly => z_dim,
            InputMode::StateOnly => state_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Prediction length of the representation rollout.
    pub k: usize,
    /// Cost limit on the undiscounted episode cost.
    pub epsilon: f64,
    pub batch_size: usize,
    /// Environment steps.
    pub steps: usize,
    /// Evaluate every this many environment steps; 0 disables.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Checkpoint every this many environment steps; 0 keeps only the
    /// initial and final checkpoints.
    pub checkpoint_every: usize,
    /// EMA rate of the target encoder.
    pub tau: f64,
    /// EMA rate of the target critics and target actor.
    pub critic_tau: f64,
    pub lr: f64,
    pub n_bins: usize,
    pub lambda_fea: f64,
    pub flavor: Flavor,
    pub head: HeadVariant,
    pub input_mode: InputMode,
    pub z_dim: usize,
    /// Encoder and latent transition hidden widths.
    pub repr_hidden: Vec<usize>,
    /// Head and projection hidden widths.
    pub head_hidden: Vec<usize>,
    pub proj_dim: usize,
    /// Actor and critic hidden widths.
    pub rl_hidden: Vec<usize>,
    pub pid_gains: [f64; 3],
    /// Keep the multiplier fixed at this value.
    pub freeze_lambda: Option<f64>,
    /// Uniform random actions for this many initial steps (off-policy).
    pub start_steps: usize,
    /// No updates before this many steps (off-policy).
    pub update_after: usize,
    /// Steps between update rounds (off-policy).
    pub update_every: usize,
    /// Gradient updates per round (off-policy).
    pub updates_per_round: usize,
    /// Penalty on the squared pre-tanh actor output; keeps the squash out of
    /// saturation.
    pub actor_reg: f64,
    /// Exploration noise as a fraction of the action range.
    pub exploration_sigma: f64,
    pub buffer_capacity: usize,
    /// Episodes collected per iteration (on-policy).
    pub episodes_per_iteration: usize,
    /// Gradient steps per iteration (on-policy).
    pub epochs_per_iteration: usize,
    /// Gaussian policy standard deviation (on-policy).
    pub policy_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            k: 4,
            epsilon: 10.0,
            batch_size: 256,
            steps: 300_000,
            eval_every: 0,
            eval_episodes: 10,
            checkpoint_every: 0,
            tau: 0.05,
            critic_tau: 0.005,
            lr: 3e-4,
            n_bins: DEFAULT_BINS,
            lambda_fea: 2.0,
            flavor: Flavor::Offpolicy,
            head: HeadVariant::Feasibility,
            input_mode: InputMode::StateAndZ,
            z_dim: 64,
            repr_hidden: vec![256, 256],
            head_hidden: vec![256],
            proj_dim: 64,
            rl_hidden: vec![256, 256],
            pid_gains: [0.02, 0.005, 0.01],
            freeze_lambda: None,
            start_steps: 5_000,
            update_after: 1_000,
            update_every: 1,
            updates_per_round: 1,
            actor_reg: 1e-3,
            exploration_sigma: 0.1,
            buffer_capacity: 1_000_000,
            episodes_per_iteration: 8,
            epochs_per_iteration: 8,
            policy_std: 0.3,
        }
    }
}

impl TrainConfig {
    /// Small networks, batch and budget sized for one laptop core on the
    /// default point-mass task: about a minute per seed.
    pub fn desk() -> Self {
        Self {
            steps: 40_000,
            batch_size: 64,
            lr: 1e-3,
            z_dim: 16,
            proj_dim: 16,
            repr_hidden: vec![32],
            head_hidden: vec![16],
            rl_hidden: vec![64, 64],
            update_every: 2,
            ..Self::default()
        }
    }

    pub fn repr_config(&self) -> ReprConfig {
        ReprConfig {
            z_dim: self.z_dim,
            hidden: self.repr_hidden.clone(),
            head_hidden: self.head_hidden.clone(),
            proj_dim: self.proj_dim,
            n_bins: self.n_bins,
            head: self.head,
        }
    }

    /// Field-level validation.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            bad.push(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        for (name, v) in [
            ("k", self.k),
            ("batch_size", self.batch_size),
            ("z_dim", self.z_dim),
            ("proj_dim", self.proj_dim),
            ("update_every", self.update_every),
            ("updates_per_round", self.updates_per_round),
            ("buffer_capacity", self.buffer_capacity),
            ("episodes_per_iteration", self.episodes_per_iteration),
            ("epochs_per_iteration", self.epochs_per_iteration),
        ] {
            if v == 0 {
                bad.push(format!("{name} must be positive"));
            }
        }
        if self.n_bins < 2 {
            bad.push(format!("n_bins must be >= 2, got {}", self.n_bins));
        }
        for (name, v) in [("epsilon", self.epsilon), ("lr", self.lr), ("policy_std", self.policy_std)] {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("tau", self.tau), ("critic_tau", self.critic_tau)] {
            if !(v > 0.0 && v <= 1.0) {
                bad.push(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        if !(self.lambda_fea >= 0.0 && self.lambda_fea.is_finite()) {
            bad.push(format!("lambda_fea must be >= 0, got {}", self.lambda_fea));
        }
        if !(self.actor_reg >= 0.0 && self.actor_reg.is_finite()) {
            bad.push(format!("actor_reg must be >= 0, got {}", self.actor_reg));
        }
        if !(self.exploration_sigma >= 0.0 && self.exploration_sigma.is_finite()) {
            bad.push(format!("exploration_sigma must be >= 0, got {}", self.exploration_sigma));
        }
        if self.pid_gains.iter().any(|g| !(*g >= 0.0)) {
            bad.push(format!("pid_gains must be >= 0, got {:?}", self.pid_gains));
        }
        if let Some(l) = self.freeze_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                bad.push(format!("freeze_lambda must be >= 0, got {l}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}
