use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::FiniteMdp;
use crate::error::{Error, Result};

/// Stochastic policy over a finite CMDP, `probs[s][a] = pi(a | s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let na = probs.first().map_or(0, Vec::len);
        if probs.is_empty() || na == 0 {
            return Err(Error::InvalidArgument("policy needs at least one state and action".into()));
        }
        for (s, row) in probs.iter().enumerate() {
            if row.len() != na {
                return Err(Error::shape(format!("{na} actions"), format!("row {s} with {}", row.len())));
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {s} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("row {s} sums to {sum}")));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let probs = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; n_actions];
                *row.get_mut(a).ok_or(Error::IndexOutOfRange { index: a, len: n_actions })? = 1.0;
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Self::new(probs)
    }

    /// Random policy whose rows are normalized uniform draws.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let probs = (0..n_states)
            .map(|_| {
                let raw: Vec<f64> = (0..n_actions).map(|_| rng.random::<f64>() + 1e-3).collect();
                let sum: f64 = raw.iter().sum();
                raw.iter().map(|p| p / sum).collect()
            })
            .collect();
        Self { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, &p) in self.probs[s].iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        self.probs[s].iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub(crate) fn check_against(&self, mdp: &FiniteMdp) -> Result<()> {
        if self.n_states() != mdp.n_states || self.n_actions() != mdp.n_actions {
            return Err(Error::shape(
                format!("policy {}x{}", mdp.n_states, mdp.n_actions),
                format!("{}x{}", self.n_states(), self.n_actions()),
            ));
        }
        Ok(())
    }
}

/// Values over `(state, action)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionTable {
    pub values: Vec<Vec<f64>>,
}

/// Feasibility scores, each in `[0, 1]`.
pub type FeasibilityTable = StateActionTable;
/// Cost Q-values, each in `[0, 1 / (1 - gamma)]`.
pub type CostValueTable = StateActionTable;

impl StateActionTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            values: vec![vec![0.0; n_actions]; n_states],
        }
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            values: (0..n_states).map(|s| (0..n_actions).map(|a| f(s, a)).collect()).collect(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    pub fn n_actions(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s][a]
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sum_a pi(a | s) * value(s, a)` for every state.
    pub fn policy_marginal(&self, pi: &TabularPolicy) -> Vec<f64> {
        self.values
            .iter()
            .enumerate()
            .map(|(s, row)| row.iter().enumerate().map(|(a, v)| pi.prob(s, a) * v).sum())
            .collect()
    }

    /// CSV with header `state,action,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,action,value\n");
        for (s, row) in self.values.iter().enumerate() {
            for (a, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{s},{a},{v}");
            }
        }
        out
    }
}
