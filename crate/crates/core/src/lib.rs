//! Feasibility-consistent safe reinforcement learning at desk scale.
//!
//! The crate bundles a small differentiable stack ([`nn`]), constrained MDP
//! plumbing ([`cmdp`]), toy environments ([`envs`]), exact oracles
//! ([`oracle`]), the representation stack ([`repr`]), a Lagrangian
//! actor-critic host ([`agent`]), diagnostics ([`analysis`]) and run
//! orchestration ([`cli`]).

pub mod agent;
pub mod analysis;
pub mod cli;
pub mod cmdp;
pub mod envs;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod repr;
pub mod seed;

pub use error::{Error, Result};
