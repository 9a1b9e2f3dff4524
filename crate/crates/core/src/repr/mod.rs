//! Representation stack: encoder, momentum target, latent transition,
//! regression head and SimSiam projections, with their losses.

mod bins;
mod stack;
mod tabular;

pub use bins::{two_hot_matrix, two_hot_project, Bins, DiscreteDist, DEFAULT_BINS};
pub use stack::{
    cost_value_target, feasibility_target, kl_to_logits, simsiam_loss, HeadVariant, ReprConfig, ReprLossReport,
    ReprStack, Rollout, COSINE_EPS,
};
pub(crate) use stack::kl_on_tape;
pub use tabular::{fit_tabular_feasibility, TabularFit, TabularFitConfig};
