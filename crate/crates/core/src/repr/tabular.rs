//! Feasibility regression on a finite CMDP with one-hot state inputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bins::{two_hot_project, Bins};
use super::stack::{feasibility_target, kl_on_tape, kl_to_logits};
use crate::cmdp::FiniteMdp;
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, Mat, Mlp, Tape};
use crate::oracle::TabularPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TabularFitConfig {
    pub z_dim: usize,
    pub hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub n_bins: usize,
    /// Held constant: the fit error per round has to stay below the
    /// contraction of one backup, and a decayed rate falls behind it.
    pub lr: f64,
    /// Adam steps between copies of the online nets into the target nets.
    pub steps_per_sync: usize,
    pub max_syncs: usize,
    /// Stop once a sync moves no readout by more than this.
    pub tol: f64,
}

impl Default for TabularFitConfig {
    fn default() -> Self {
        Self {
            z_dim: 16,
            hidden: vec![64],
            head_hidden: vec![64],
            n_bins: super::DEFAULT_BINS,
            lr: 1e-3,
            steps_per_sync: 100,
            max_syncs: 1500,
            tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularFit {
    pub encoder: Mlp,
    pub head: Mlp,
    pub bins: Bins,
    /// `E[f(g(s))]` per state.
    pub values: Vec<f64>,
    pub syncs: usize,
    /// Largest readout change over the final sync.
    pub last_change: f64,
    pub final_loss: f64,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

fn readout(encoder: &Mlp, head: &Mlp, bins: &Bins, x: &Mat) -> Result<Vec<f64>> {
    Ok(bins.expectation_of_logits(&head.forward(&encoder.forward(x)?)?))
}

/// Fitted iteration of the feasibility backup under `pi`. Each round
/// regresses `E[f(g(s))]` toward `sum_a pi(a|s) max{c(s, a), gamma E_s'
/// F^(m)(s')}` through the two-hot KL loss, where `F^(m)` reads the target
/// copies; the target copies then take the online weights.
pub fn fit_tabular_feasibility<R: Rng + ?Sized>(
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
    gamma: f64,
    cfg: &TabularFitConfig,
    rng: &mut R,
) -> Result<TabularFit> {
    pi.check_against(mdp)?;
    if cfg.steps_per_sync == 0 || cfg.max_syncs == 0 {
        return Err(Error::InvalidArgument("steps_per_sync and max_syncs must be positive".into()));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let n = mdp.n_states;
    let x = Mat::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { 0.0 });
    let bins = Bins::feasibility(cfg.n_bins);
    let mut encoder = Mlp::new(&sizes(n, &cfg.hidden, cfg.z_dim), Activation::Relu, Activation::Identity, rng);
    let mut head = Mlp::new(&sizes(cfg.z_dim, &cfg.head_hidden, cfg.n_bins), Activation::Relu, Activation::Identity, rng);
    let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut opt_g = AdamState::for_params(&encoder.params(), adam);
    let mut opt_f = AdamState::for_params(&head.params(), adam);
    let mut current = readout(&encoder, &head, &bins, &x)?;
    let (mut syncs, mut last_change, mut final_loss) = (0, f64::INFINITY, f64::NAN);

    while syncs < cfg.max_syncs {
        let mut target = Mat::zeros((n, cfg.n_bins));
        for s in 0..n {
            for a in 0..mdp.n_actions {
                let p = pi.prob(s, a);
                if p == 0.0 {
                    continue;
                }
                let next: f64 = mdp.transitions[s][a].iter().map(|&(sn, q)| q * current[sn]).sum();
                let y = feasibility_target(mdp.cost[s][a], next, gamma, false);
                let d = two_hot_project(y, &bins)?;
                for (t, v) in target.row_mut(s).iter_mut().zip(&d.probs) {
                    *t += p * v;
                }
            }
        }
        for _ in 0..cfg.steps_per_sync {
            let mut tape = Tape::new();
            let bg = encoder.bind(&mut tape);
            let bf = head.bind(&mut tape);
            let xv = tape.constant(x.clone());
            let z = encoder.apply(&mut tape, &bg, xv)?;
            let logits = head.apply(&mut tape, &bf, z)?;
            let loss = kl_on_tape(&mut tape, logits, target.clone());
            let grads = tape.backward(loss)?;
            opt_g.step(&mut encoder.params_mut(), &bg.grads(&grads))?;
            opt_f.step(&mut head.params_mut(), &bf.grads(&grads))?;
        }
        final_loss = kl_to_logits(&target, &head.forward(&encoder.forward(&x)?)?);
        let next = readout(&encoder, &head, &bins, &x)?;
        last_change = next.iter().zip(&current).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        current = next;
        syncs += 1;
        if !final_loss.is_finite() {
            return Err(Error::TrainingDiverged("tabular feasibility fit".into()));
        }
        if last_change < cfg.tol {
            break;
        }
    }
    Ok(TabularFit {
        encoder,
        head,
        bins,
        values: current,
        syncs,
        last_change,
        final_loss,
    })
}

