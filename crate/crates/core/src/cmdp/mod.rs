//! CMDP description, transition records, trajectories and the K-step replay buffer.

mod buffer;
pub mod io;
mod spec;
mod trajectory;

pub use buffer::{McTargets, ReplayBuffer, TransitionBatch};
pub use spec::{CmdpFlavor, CmdpSpec, FiniteMdp};
pub use trajectory::{Cost, Trajectory, Transition};

#[cfg(test)]
pub(crate) use trajectory::test_support;
