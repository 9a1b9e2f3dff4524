use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bins::{two_hot_matrix, Bins, DEFAULT_BINS};
use crate::cmdp::TransitionBatch;
use crate::error::{Error, Result};
use crate::nn::{ema_update, hcat, log_softmax_rows, Activation, AdamState, Bound, Mat, Mlp, ParamFile, Parameterized, Tape, Var};

/// Denominator floor of the cosine similarity.
pub const COSINE_EPS: f64 = 1e-8;

/// What the representation head regresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadVariant {
    /// Feasibility score, bins over `[0, 1]`.
    #[default]
    Feasibility,
    /// Discounted cost value, bins over `[0, 1 / (1 - gamma)]`.
    CostValue,
}

impl HeadVariant {
    pub fn bins(self, n: usize, gamma: f64) -> Bins {
        match self {
            HeadVariant::Feasibility => Bins::feasibility(n),
            HeadVariant::CostValue => Bins::cost_value(n, gamma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReprConfig {
    pub z_dim: usize,
    /// Hidden widths of the encoder and the latent transition.
    pub hidden: Vec<usize>,
    /// Hidden widths of the head and both projections.
    pub head_hidden: Vec<usize>,
    pub proj_dim: usize,
    pub n_bins: usize,
    pub head: HeadVariant,
}

impl Default for ReprConfig {
    fn default() -> Self {
        Self {
            z_dim: 64,
            hidden: vec![256, 256],
            head_hidden: vec![256],
            proj_dim: 64,
            n_bins: DEFAULT_BINS,
            head: HeadVariant::Feasibility,
        }
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// `max{c, gamma * next}`, or `c` at a true terminal.
pub fn feasibility_target(cost: f64, next_expectation: f64, gamma: f64, terminal: bool) -> f64 {
    if terminal {
        cost
    } else {
        cost.max(gamma * next_expectation)
    }
}

/// `c + gamma * next`, or `c` at a true terminal.
pub fn cost_value_target(cost: f64, next_expectation: f64, gamma: f64, terminal: bool) -> f64 {
    if terminal {
        cost
    } else {
        cost + gamma * next_expectation
    }
}

/// Batch mean of `-cos(p2(p1(z_pred)), p1(z_target))`.
pub fn simsiam_loss(z_pred: &Mat, z_target: &Mat, p1: &Mlp, p2: &Mlp) -> Result<f64> {
    simsiam_split(z_pred, z_target, p1, p2, p1)
}

/// SimSiam with a separate projection on the (stop-gradient) target side.
fn simsiam_split(z_pred: &Mat, z_target: &Mat, p1: &Mlp, p2: &Mlp, p1_target: &Mlp) -> Result<f64> {
    if z_pred.dim() != z_target.dim() {
        return Err(Error::shape(format!("{:?}", z_pred.dim()), format!("{:?}", z_target.dim())));
    }
    let u = p2.forward(&p1.forward(z_pred)?)?;
    let v = p1_target.forward(z_target)?;
    let n = u.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let (a, b) = (u.row(i), v.row(i));
        let denom = (a.dot(&a).sqrt() * b.dot(&b).sqrt()).max(COSINE_EPS);
        total += -a.dot(&b) / denom;
    }
    Ok(total / n as f64)
}

/// Batch mean of `KL(target_row || softmax(logit_row))`.
pub fn kl_to_logits(target: &Mat, logits: &Mat) -> f64 {
    let logq = log_softmax_rows(logits);
    let n = target.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for (p, lq) in target.row(i).iter().zip(logq.row(i)) {
            if *p > 0.0 {
                total += p * (p.ln() - lq);
            }
        }
    }
    total / n as f64
}

/// Losses of one batch. `total = dynamics + lambda_fea * head`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReprLossReport {
    pub dynamics: f64,
    /// Feasibility (or cost-value) regression loss.
    pub head: f64,
    pub total: f64,
    pub lambda_fea: f64,
    /// Dynamics term of steps `k = 1..=K`.
    pub per_step_dynamics: Vec<f64>,
    /// Head term of steps `k = 0..K`.
    pub per_step_head: Vec<f64>,
}

/// Latents of one rollout. `predicted[k]` and `targets[k]` belong to step
/// `t + k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub encoded: Mat,
    pub predicted: Vec<Mat>,
    pub targets: Vec<Mat>,
}

impl Rollout {
    /// Online latent read by the head at step `t + k`.
    pub fn online(&self, k: usize) -> &Mat {
        if k == 0 {
            &self.encoded
        } else {
            &self.predicted[k - 1]
        }
    }
}

/// Encoder `g`, target encoder `g^(m)`, latent transition `h`, regression
/// head and the two projections.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprStack {
    pub config: ReprConfig,
    pub state_dim: usize,
    pub action_dim: usize,
    pub gamma: f64,
    pub bins: Bins,
    pub encoder: Mlp,
    pub target_encoder: Mlp,
    pub transition: Mlp,
    pub head: Mlp,
    pub p1: Mlp,
    pub p2: Mlp,
}

struct Bindings {
    g: Bound,
    h: Bound,
    head: Bound,
    p1: Bound,
    p2: Bound,
}

impl ReprStack {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, gamma: f64, config: ReprConfig, rng: &mut R) -> Result<Self> {
        if config.z_dim == 0 || config.proj_dim == 0 || config.n_bins < 2 {
            return Err(Error::Config("z_dim, proj_dim must be positive and n_bins >= 2".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        let (relu, id) = (Activation::Relu, Activation::Identity);
        let z = config.z_dim;
        let encoder = Mlp::new(&sizes(state_dim, &config.hidden, z), relu, id, rng);
        let transition = Mlp::new(&sizes(z + action_dim, &config.hidden, z), relu, id, rng);
        let head = Mlp::new(&sizes(z, &config.head_hidden, config.n_bins), relu, id, rng);
        let p1 = Mlp::new(&sizes(z, &config.head_hidden, config.proj_dim), relu, id, rng);
        let p2 = Mlp::new(&sizes(config.proj_dim, &config.head_hidden, config.proj_dim), relu, id, rng);
        Ok(Self {
            bins: config.head.bins(config.n_bins, gamma),
            config,
            state_dim,
            action_dim,
            gamma,
            target_encoder: encoder.clone(),
            encoder,
            transition,
            head,
            p1,
            p2,
        })
    }

    pub fn variant(&self) -> HeadVariant {
        self.config.head
    }

    /// Zeroes the head's output layer so it reads out the uniform distribution.
    pub fn zero_head_output(&mut self) {
        self.head.zero_output_layer();
    }

    pub fn trainable_params(&self) -> Vec<&Mat> {
        let mut v = self.encoder.params();
        v.extend(self.transition.params());
        v.extend(self.head.params());
        v.extend(self.p1.params());
        v.extend(self.p2.params());
        v
    }

    /// Parameters of `g, h, head, p1, p2` in that order.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut Mat> {
        let mut v = self.encoder.params_mut();
        v.extend(self.transition.params_mut());
        v.extend(self.head.params_mut());
        v.extend(self.p1.params_mut());
        v.extend(self.p2.params_mut());
        v
    }

    pub fn optimizer(&self, config: crate::nn::AdamConfig) -> AdamState {
        AdamState::for_params(&self.trainable_params(), config)
    }

    /// `g^(m) <- (1 - tau) g^(m) + tau g`.
    pub fn update_target(&mut self, tau: f64) -> Result<()> {
        let online = self.encoder.params();
        let online: Vec<Mat> = online.into_iter().cloned().collect();
        let refs: Vec<&Mat> = online.iter().collect();
        ema_update(&mut self.target_encoder.params_mut(), &refs, tau)
    }

    pub fn encode(&self, states: &Mat) -> Result<Mat> {
        self.encoder.forward(states)
    }

    pub fn encode_target(&self, states: &Mat) -> Result<Mat> {
        self.target_encoder.forward(states)
    }

    /// Expected head value for each latent row.
    pub fn head_expectation(&self, z: &Mat) -> Result<Vec<f64>> {
        Ok(self.bins.expectation_of_logits(&self.head.forward(z)?))
    }

    /// `E[head(g^(m)(s))]` per state row.
    pub fn target_readout(&self, states: &Mat) -> Result<Vec<f64>> {
        self.head_expectation(&self.encode_target(states)?)
    }

    fn check_batch(&self, batch: &TransitionBatch) -> Result<()> {
        if batch.k == 0 {
            return Err(Error::InvalidArgument("rollout length K must be positive".into()));
        }
        if batch.states[0].ncols() != self.state_dim || batch.actions[0].ncols() != self.action_dim {
            return Err(Error::shape(
                format!("state {} / action {}", self.state_dim, self.action_dim),
                format!("{} / {}", batch.states[0].ncols(), batch.actions[0].ncols()),
            ));
        }
        Ok(())
    }

    /// `z_t = g(s_t)`, then `z_{t+k+1} = h(z_{t+k}, a_{t+k})`; targets are
    /// `g^(m)(s_{t+k+1})`.
    pub fn rollout_predict(&self, batch: &TransitionBatch) -> Result<Rollout> {
        self.rollout_against(self, batch)
    }

    fn rollout_against(&self, frozen: &ReprStack, batch: &TransitionBatch) -> Result<Rollout> {
        self.check_batch(batch)?;
        let encoded = self.encode(&batch.states[0])?;
        let mut predicted = Vec::with_capacity(batch.k);
        let mut z = encoded.clone();
        for k in 0..batch.k {
            z = self.transition.forward(&hcat(&z, &batch.actions[k]))?;
            predicted.push(z.clone());
        }
        let targets = (1..=batch.k)
            .map(|k| frozen.encode_target(&batch.states[k]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Rollout {
            encoded,
            predicted,
            targets,
        })
    }

    /// Scalar regression targets of step `k` for `variant`, bootstrapping
    /// through this stack's head at `next_target = g^(m)(s_{t+k+1})`.
    pub fn head_targets(&self, batch: &TransitionBatch, k: usize, next_target: &Mat, variant: HeadVariant) -> Result<Vec<f64>> {
        if let Some(mc) = &batch.mc_targets {
            let t = match variant {
                HeadVariant::Feasibility => &mc.feasibility,
                HeadVariant::CostValue => &mc.cost_value,
            };
            return Ok(t[k].clone());
        }
        let bins = variant.bins(self.config.n_bins, self.gamma);
        let next = bins.expectation_of_logits(&self.head.forward(next_target)?);
        Ok((0..next.len())
            .map(|b| {
                let (c, term) = (batch.costs[k][b], batch.terminated[k][b]);
                match variant {
                    HeadVariant::Feasibility => feasibility_target(c, next[b], self.gamma, term),
                    HeadVariant::CostValue => cost_value_target(c, next[b], self.gamma, term),
                }
            })
            .collect())
    }

    fn dynamics_terms(&self, frozen: &ReprStack, rollout: &Rollout) -> Result<Vec<f64>> {
        rollout
            .predicted
            .iter()
            .zip(&rollout.targets)
            .map(|(p, t)| simsiam_split(p, t, &self.p1, &self.p2, &frozen.p1))
            .collect()
    }

    fn head_terms(&self, frozen: &ReprStack, batch: &TransitionBatch, rollout: &Rollout, variant: HeadVariant) -> Result<Vec<f64>> {
        let bins = variant.bins(self.config.n_bins, self.gamma);
        (0..batch.k)
            .map(|k| {
                let targets = two_hot_matrix(&frozen.head_targets(batch, k, &rollout.targets[k], variant)?, &bins)?;
                Ok(kl_to_logits(&targets, &self.head.forward(rollout.online(k))?))
            })
            .collect()
    }

    /// Batch mean of `sum_{k=1..K}` SimSiam terms.
    pub fn dynamics_loss(&self, batch: &TransitionBatch) -> Result<f64> {
        Ok(self.dynamics_terms(self, &self.rollout_predict(batch)?)?.iter().sum())
    }

    /// Batch mean of `sum_{k=0..K-1} KL(two_hot(F^(m)(s_{t+k})) || head(z_{t+k}))`.
    pub fn feasibility_loss(&self, batch: &TransitionBatch) -> Result<f64> {
        Ok(self.head_terms(self, batch, &self.rollout_predict(batch)?, HeadVariant::Feasibility)?.iter().sum())
    }

    /// As [`ReprStack::feasibility_loss`] with the cost-value target and bins.
    pub fn vc_variant_loss(&self, batch: &TransitionBatch) -> Result<f64> {
        Ok(self.head_terms(self, batch, &self.rollout_predict(batch)?, HeadVariant::CostValue)?.iter().sum())
    }

    /// Loss report computed without the tape.
    pub fn evaluate_losses(&self, batch: &TransitionBatch, lambda_fea: f64) -> Result<ReprLossReport> {
        self.losses_against(self, batch, lambda_fea)
    }

    /// Loss report where every stop-gradient quantity (target latents,
    /// bootstrap readouts, target-side projection) comes from `frozen`.
    /// Differentiating this in the parameters of `self` at `self == frozen`
    /// gives exactly the gradient [`ReprStack::repr_gradients`] reports.
    pub fn losses_against(&self, frozen: &ReprStack, batch: &TransitionBatch, lambda_fea: f64) -> Result<ReprLossReport> {
        let rollout = self.rollout_against(frozen, batch)?;
        let per_step_dynamics = self.dynamics_terms(frozen, &rollout)?;
        let per_step_head = self.head_terms(frozen, batch, &rollout, self.variant())?;
        Ok(report(per_step_dynamics, per_step_head, lambda_fea))
    }

    fn bind(&self, tape: &mut Tape) -> Bindings {
        Bindings {
            g: self.encoder.bind(tape),
            h: self.transition.bind(tape),
            head: self.head.bind(tape),
            p1: self.p1.bind(tape),
            p2: self.p2.bind(tape),
        }
    }

    fn record(&self, tape: &mut Tape, b: &Bindings, batch: &TransitionBatch) -> Result<(Vec<Var>, Vec<Var>)> {
        self.check_batch(batch)?;
        let bins = self.bins;
        let targets = (1..=batch.k)
            .map(|k| self.encode_target(&batch.states[k]))
            .collect::<Result<Vec<_>>>()?;
        let s0 = tape.constant(batch.states[0].clone());
        let mut z = self.encoder.apply(tape, &b.g, s0)?;
        let (mut dyn_terms, mut head_terms) = (Vec::new(), Vec::new());
        for k in 0..batch.k {
            let logits = self.head.apply(tape, &b.head, z)?;
            let probs = two_hot_matrix(&self.head_targets(batch, k, &targets[k], self.variant())?, &bins)?;
            head_terms.push(kl_on_tape(tape, logits, probs));

            let a = tape.constant(batch.actions[k].clone());
            let za = tape.concat_cols(z, a);
            z = self.transition.apply(tape, &b.h, za)?;

            let proj = self.p1.apply(tape, &b.p1, z)?;
            let u = self.p2.apply(tape, &b.p2, proj)?;
            let v = tape.constant(self.p1.forward(&targets[k])?);
            let cos = tape.cosine_rows(u, v, COSINE_EPS);
            let m = tape.mean_all(cos);
            dyn_terms.push(tape.scale(m, -1.0));
        }
        Ok((dyn_terms, head_terms))
    }

    /// Loss report and gradients of `dynamics + lambda_fea * head` with
    /// respect to [`ReprStack::trainable_params`].
    pub fn repr_gradients(&self, batch: &TransitionBatch, lambda_fea: f64) -> Result<(ReprLossReport, Vec<Mat>)> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let (dyn_terms, head_terms) = self.record(&mut tape, &b, batch)?;
        let per_step_dynamics: Vec<f64> = dyn_terms.iter().map(|&v| tape.scalar(v)).collect();
        let per_step_head: Vec<f64> = head_terms.iter().map(|&v| tape.scalar(v)).collect();
        let mut total = dyn_terms[0];
        for &d in &dyn_terms[1..] {
            total = tape.add(total, d);
        }
        if lambda_fea != 0.0 {
            for &h in &head_terms {
                let w = tape.scale(h, lambda_fea);
                total = tape.add(total, w);
            }
        }
        let rep = report(per_step_dynamics, per_step_head, lambda_fea);
        if !rep.total.is_finite() {
            return Err(Error::TrainingDiverged(format!("non-finite representation loss {rep:?}")));
        }
        let grads = tape.backward(total)?;
        let mut out = b.g.grads(&grads);
        out.extend(b.h.grads(&grads));
        out.extend(b.head.grads(&grads));
        out.extend(b.p1.grads(&grads));
        out.extend(b.p2.grads(&grads));
        Ok((rep, out))
    }

    /// One optimizer step on `g, h, head, p1, p2`. The target encoder is left
    /// alone.
    pub fn repr_update(&mut self, batch: &TransitionBatch, lambda_fea: f64, opt: &mut AdamState) -> Result<ReprLossReport> {
        let (rep, grads) = self.repr_gradients(batch, lambda_fea)?;
        opt.step(&mut self.trainable_params_mut(), &grads)?;
        Ok(rep)
    }

    pub fn to_param_file(&self, lambda_fea: f64) -> ParamFile {
        let mut f = ParamFile::new();
        f.push_mlp("repr.encoder", &self.encoder);
        f.push_mlp("repr.target_encoder", &self.target_encoder);
        f.push_mlp("repr.transition", &self.transition);
        f.push_mlp("repr.head", &self.head);
        f.push_mlp("repr.p1", &self.p1);
        f.push_mlp("repr.p2", &self.p2);
        f.set_meta("repr.config", &self.config);
        f.set_meta("repr.bins", self.bins);
        f.set_meta("repr.gamma", self.gamma);
        f.set_meta("repr.dims", [self.state_dim, self.action_dim]);
        f.set_meta("repr.lambda_fea", lambda_fea);
        f
    }

    /// Restores a stack and its `lambda_fea`.
    pub fn from_param_file(f: &ParamFile) -> Result<(Self, f64)> {
        let dims: [usize; 2] = f.meta("repr.dims")?;
        let stack = Self {
            config: f.meta("repr.config")?,
            state_dim: dims[0],
            action_dim: dims[1],
            gamma: f.meta("repr.gamma")?,
            bins: f.meta("repr.bins")?,
            encoder: f.mlp("repr.encoder")?,
            target_encoder: f.mlp("repr.target_encoder")?,
            transition: f.mlp("repr.transition")?,
            head: f.mlp("repr.head")?,
            p1: f.mlp("repr.p1")?,
            p2: f.mlp("repr.p2")?,
        };
        Ok((stack, f.meta("repr.lambda_fea")?))
    }
}

impl Parameterized for ReprStack {
    fn params_mut(&mut self) -> Vec<&mut Mat> {
        self.trainable_params_mut()
    }
}

fn report(per_step_dynamics: Vec<f64>, per_step_head: Vec<f64>, lambda_fea: f64) -> ReprLossReport {
    let dynamics: f64 = per_step_dynamics.iter().sum();
    let head: f64 = per_step_head.iter().sum();
    ReprLossReport {
        dynamics,
        head,
        total: dynamics + lambda_fea * head,
        lambda_fea,
        per_step_dynamics,
        per_step_head,
    }
}

/// Batch mean of `KL(P || softmax(logits))` for a constant target `P`.
pub(crate) fn kl_on_tape(tape: &mut Tape, logits: Var, target: Mat) -> Var {
    let neg_entropy = target
        .rows()
        .into_iter()
        .map(|r| r.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>())
        .collect::<Vec<_>>();
    let n = neg_entropy.len();
    let ne = tape.constant(Mat::from_shape_vec((n, 1), neg_entropy).expect("column"));
    let logq = tape.log_softmax(logits);
    let p = tape.constant(target);
    let weighted = tape.mul(p, logq);
    let cross = tape.row_sum(weighted);
    let kl = tape.sub(ne, cross);
    tape.mean_all(kl)
}
