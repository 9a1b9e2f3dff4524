use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tabular dynamics, rewards and binary costs of a finite CMDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transitions[s][a]` lists `(next_state, probability)` pairs.
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    pub reward: Vec<Vec<f64>>,
    /// Binary cost `c(s, a)`, stored as 0.0 or 1.0.
    pub cost: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

impl FiniteMdp {
    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(Error::InvalidArgument("finite CMDP needs states and actions".into()));
        }
        let table_ok = |t: &Vec<Vec<f64>>| t.len() == ns && t.iter().all(|r| r.len() == na);
        if self.transitions.len() != ns
            || self.transitions.iter().any(|r| r.len() != na)
            || !table_ok(&self.reward)
            || !table_ok(&self.cost)
            || self.initial.len() != ns
        {
            return Err(Error::shape(format!("tables over {ns} states x {na} actions"), "ragged tables"));
        }
        for (s, row) in self.transitions.iter().enumerate() {
            for (a, succ) in row.iter().enumerate() {
                let mut total = 0.0;
                for &(next, p) in succ {
                    if next >= ns || !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidArgument(format!("bad successor ({next}, {p}) at ({s}, {a})")));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!("T(.|{s},{a}) sums to {total}")));
                }
            }
        }
        if self.cost.iter().flatten().any(|&c| c != 0.0 && c != 1.0) {
            return Err(Error::InvalidArgument("costs must be binary".into()));
        }
        if self.reward.iter().flatten().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("rewards".into()));
        }
        let mass: f64 = self.initial.iter().sum();
        if self.initial.iter().any(|&p| p < 0.0) || (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("initial distribution must sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CmdpFlavor {
    Finite(FiniteMdp),
    /// Dynamics live in an environment; only dimensions are recorded.
    Continuous,
}

/// Constrained MDP description: dimensions, discount and cost budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmdpSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub gamma: f64,
    pub cost_threshold: f64,
    pub flavor: CmdpFlavor,
}

fn check_common(gamma: f64, eps: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("cost threshold must be >= 0, got {eps}")));
    }
    Ok(())
}

impl CmdpSpec {
    pub fn finite(mdp: FiniteMdp, gamma: f64, cost_threshold: f64) -> Result<Self> {
        check_common(gamma, cost_threshold)?;
        mdp.validate()?;
        Ok(Self {
            state_dim: mdp.n_states,
            action_dim: mdp.n_actions,
            gamma,
            cost_threshold,
            flavor: CmdpFlavor::Finite(mdp),
        })
    }

    pub fn continuous(state_dim: usize, action_dim: usize, gamma: f64, cost_threshold: f64) -> Result<Self> {
        check_common(gamma, cost_threshold)?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        Ok(Self {
            state_dim,
            action_dim,
            gamma,
            cost_threshold,
            flavor: CmdpFlavor::Continuous,
        })
    }

    pub fn as_finite(&self) -> Result<&FiniteMdp> {
        match &self.flavor {
            CmdpFlavor::Finite(m) => Ok(m),
            CmdpFlavor::Continuous => Err(Error::UnsupportedFlavor),
        }
    }

    /// Same CMDP with a different discount (bypasses the `(0,1)` check so
    /// tests can drive deliberately broken operators).
    pub fn with_gamma_unchecked(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }
}
