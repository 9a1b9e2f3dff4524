//! Actor and critic objectives, each with a plain evaluation and a taped
//! gradient route.

use crate::error::{Error, Result};
use crate::nn::{hcat, softmax_rows, Mat, Mlp, Tape, Var};
use crate::repr::{kl_on_tape, kl_to_logits, Bins};

pub(crate) fn column(v: &[f64]) -> Mat {
    Mat::from_shape_vec((v.len(), 1), v.to_vec()).expect("column")
}

fn check_rows(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::shape(format!("{what} with {expected} rows"), got));
    }
    Ok(())
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::TrainingDiverged(format!("non-finite {what}")))
    }
}

/// Expected value of the cost critic's distribution per row.
pub fn cost_expectation(cost_critic: &Mlp, bins: &Bins, input: &Mat) -> Result<Vec<f64>> {
    Ok(bins.expectation_of_logits(&cost_critic.forward(input)?))
}

/// `mean (Q_r(input) - target)^2`.
pub fn reward_critic_loss(critic: &Mlp, input: &Mat, targets: &[f64]) -> Result<f64> {
    check_rows("reward targets", input.nrows(), targets.len())?;
    let q = critic.forward(input)?;
    let n = targets.len() as f64;
    Ok(q.column(0).iter().zip(targets).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / n)
}

pub fn reward_critic_grad(critic: &Mlp, input: &Mat, targets: &[f64]) -> Result<(f64, Vec<Mat>)> {
    check_rows("reward targets", input.nrows(), targets.len())?;
    let mut tape = Tape::new();
    let b = critic.bind(&mut tape);
    let x = tape.constant(input.clone());
    let q = critic.apply(&mut tape, &b, x)?;
    let y = tape.constant(column(targets));
    let d = tape.sub(q, y);
    let sq = tape.square(d);
    let loss = tape.mean_all(sq);
    let value = finite("reward critic loss", tape.scalar(loss))?;
    let grads = tape.backward(loss)?;
    Ok((value, b.grads(&grads)))
}

/// Batch-mean `KL(target || softmax(Q_c(input)))`.
pub fn cost_critic_loss(critic: &Mlp, input: &Mat, target_probs: &Mat) -> Result<f64> {
    check_rows("cost targets", input.nrows(), target_probs.nrows())?;
    Ok(kl_to_logits(target_probs, &critic.forward(input)?))
}

pub fn cost_critic_grad(critic: &Mlp, input: &Mat, target_probs: &Mat) -> Result<(f64, Vec<Mat>)> {
    check_rows("cost targets", input.nrows(), target_probs.nrows())?;
    let mut tape = Tape::new();
    let b = critic.bind(&mut tape);
    let x = tape.constant(input.clone());
    let logits = critic.apply(&mut tape, &b, x)?;
    let loss = kl_on_tape(&mut tape, logits, target_probs.clone());
    let value = finite("cost critic loss", tape.scalar(loss))?;
    let grads = tape.backward(loss)?;
    Ok((value, b.grads(&grads)))
}

/// The two critics the actor is scored against.
#[derive(Debug, Clone, Copy)]
pub struct CriticPair<'a> {
    pub reward: &'a Mlp,
    pub cost: &'a Mlp,
    pub cost_bins: &'a Bins,
}

/// `-mean[Q_r(x, pi(x)) - lambda Q_c(x, pi(x))] / (1 + lambda)
/// + reg * mean(u^2)`, where `u` is the actor's pre-tanh output.
pub fn actor_loss(actor: &Mlp, critics: CriticPair<'_>, inputs: &Mat, lambda: f64, reg: f64) -> Result<f64> {
    let (a, u) = actor.forward_with_preactivation(inputs)?;
    let xa = hcat(inputs, &a);
    let qr = critics.reward.forward(&xa)?;
    let qc = cost_expectation(critics.cost, critics.cost_bins, &xa)?;
    let n = inputs.nrows() as f64;
    let obj: f64 = qr.column(0).iter().zip(&qc).map(|(r, c)| r - lambda * c).sum::<f64>() / n;
    let pen = u.iter().map(|v| v * v).sum::<f64>() / u.len() as f64;
    Ok(-obj / (1.0 + lambda) + reg * pen)
}

/// Gradient of [`actor_loss`] with respect to the actor only.
pub fn actor_grad(actor: &Mlp, critics: CriticPair<'_>, inputs: &Mat, lambda: f64, reg: f64) -> Result<(f64, Vec<Mat>)> {
    let mut tape = Tape::new();
    let ba = actor.bind(&mut tape);
    let br = critics.reward.bind_frozen(&mut tape);
    let bc = critics.cost.bind_frozen(&mut tape);
    let x = tape.constant(inputs.clone());
    let (a, u) = actor.apply_with_preactivation(&mut tape, &ba, x)?;
    let xa = tape.concat_cols(x, a);
    let qr = critics.reward.apply(&mut tape, &br, xa)?;
    let logits = critics.cost.apply(&mut tape, &bc, xa)?;
    let probs = tape.softmax(logits);
    let centers = tape.constant(column(&critics.cost_bins.centers()));
    let qc = tape.matmul(probs, centers);
    let pen = tape.scale(qc, lambda);
    let obj = tape.sub(qr, pen);
    let m = tape.mean_all(obj);
    let mut loss = tape.scale(m, -1.0 / (1.0 + lambda));
    if reg != 0.0 {
        let sq = tape.square(u);
        let msq = tape.mean_all(sq);
        let r = tape.scale(msq, reg);
        loss = tape.add(loss, r);
    }
    let value = finite("actor loss", tape.scalar(loss))?;
    let grads = tape.backward(loss)?;
    Ok((value, ba.grads(&grads)))
}

/// Surrogate whose actor gradient is `-mean[A grad log N(a; mu(x), std^2)]`:
/// `mean_i A_i |a_i - mu(x_i)|^2 / (2 std^2)`.
pub fn policy_gradient_loss(actor: &Mlp, inputs: &Mat, actions: &Mat, advantages: &[f64], std: f64) -> Result<f64> {
    check_rows("advantages", inputs.nrows(), advantages.len())?;
    let mu = actor.forward(inputs)?;
    let n = advantages.len() as f64;
    let mut total = 0.0;
    for (i, adv) in advantages.iter().enumerate() {
        let sq: f64 = actions.row(i).iter().zip(mu.row(i)).map(|(a, m)| (a - m).powi(2)).sum();
        total += adv * sq / (2.0 * std * std);
    }
    Ok(total / n)
}

pub fn policy_gradient_grad(actor: &Mlp, inputs: &Mat, actions: &Mat, advantages: &[f64], std: f64) -> Result<(f64, Vec<Mat>)> {
    check_rows("advantages", inputs.nrows(), advantages.len())?;
    let mut tape = Tape::new();
    let b = actor.bind(&mut tape);
    let x = tape.constant(inputs.clone());
    let mu = actor.apply(&mut tape, &b, x)?;
    let a = tape.constant(actions.clone());
    let d = tape.sub(a, mu);
    let sq = tape.square(d);
    let per: Var = tape.row_sum(sq);
    let adv = tape.constant(column(advantages));
    let weighted = tape.mul(per, adv);
    let m = tape.mean_all(weighted);
    let loss = tape.scale(m, 1.0 / (2.0 * std * std));
    let value = finite("policy-gradient loss", tape.scalar(loss))?;
    let grads = tape.backward(loss)?;
    Ok((value, b.grads(&grads)))
}

/// Softmax probabilities of the cost critic, one row per input.
pub fn cost_distribution(cost_critic: &Mlp, input: &Mat) -> Result<Mat> {
    Ok(softmax_rows(&cost_critic.forward(input)?))
}
