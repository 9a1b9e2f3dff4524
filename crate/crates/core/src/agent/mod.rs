//! Lagrangian actor-critic hosting the representation stack.

mod config;
mod losses;
mod onpolicy;
mod pid;
mod state;
mod train;

pub use config::{Flavor, InputMode, TrainConfig};
pub use losses::{
    actor_grad, actor_loss, cost_critic_grad, cost_critic_loss, cost_distribution, cost_expectation, policy_gradient_grad,
    policy_gradient_loss, reward_critic_grad, reward_critic_loss, CriticPair,
};
pub use onpolicy::{episode_targets, mc_window_batch, onpolicy_targets, onpolicy_targets_with, reward_to_go, EpisodeTargets};
pub use pid::{pid_update, PidState};
pub use state::{AgentState, CriticLosses, Optimizers};
pub use train::{
    evaluate, load_checkpoint, metrics_csv, normalized_cost, normalized_reward, random_policy_baseline, save_checkpoint, train_loop,
    EvalPoint, EvalReport, MetricRow, Phase, TrainOptions, TrainOutput, METRICS_HEADER,
};
