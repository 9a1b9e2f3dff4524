use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::onpolicy_targets;
use crate::envs::{run_episode, PointHazard2DEnv};
use crate::error::{Error, Result};
use crate::nn::{rows_to_mat, Mat, Mlp};
use crate::repr::HeadVariant;
use crate::seed::{SeedStreams, Stream};

pub const PROBE_RIDGE: f64 = 1e-6;
pub const PROBE_TRAIN_FRACTION: f64 = 0.8;
const SPLIT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n_train: usize,
    pub n_test: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    /// Weights over the latent coordinates followed by the bias.
    pub weights: Vec<f64>,
}

/// Ridge solution `w = (X^T X + ridge I)^-1 X^T y` with a bias column.
pub fn ridge_fit(x: &Mat, y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let (n, d) = x.dim();
    if n != y.len() {
        return Err(Error::shape(format!("{n} targets"), y.len()));
    }
    let xm = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[[i, j]] } else { 1.0 });
    let yv = DVector::from_column_slice(y);
    let gram = xm.transpose() * &xm + DMatrix::identity(d + 1, d + 1) * ridge;
    let rhs = xm.transpose() * yv;
    let w = match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => gram.lu().solve(&rhs).ok_or_else(|| Error::NonFinite("singular probe system".into()))?,
    };
    Ok(w.iter().copied().collect())
}

fn mse(x: &Mat, y: &[f64], rows: &[usize], w: &[f64]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let d = x.ncols();
    let sq: f64 = rows
        .iter()
        .map(|&i| {
            let pred = (0..d).map(|j| x[[i, j]] * w[j]).sum::<f64>() + w[d];
            (pred - y[i]).powi(2)
        })
        .sum();
    sq / rows.len() as f64
}

/// Linear readout from latents to targets on a fixed 80/20 split.
pub fn probe_latents(z: &Mat, targets: &[f64]) -> Result<ProbeReport> {
    let n = z.nrows();
    if n != targets.len() {
        return Err(Error::shape(format!("{n} targets"), targets.len()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("probe needs at least two samples".into()));
    }
    if z.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probe data".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(SPLIT_SEED));
    let n_train = ((n as f64 * PROBE_TRAIN_FRACTION).round() as usize).clamp(1, n - 1);
    let (train, test) = idx.split_at(n_train);
    let xt = Mat::from_shape_fn((train.len(), z.ncols()), |(i, j)| z[[train[i], j]]);
    let yt: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
    let weights = ridge_fit(&xt, &yt, PROBE_RIDGE)?;
    Ok(ProbeReport {
        n_train: train.len(),
        n_test: test.len(),
        train_mse: mse(z, targets, train, &weights),
        test_mse: mse(z, targets, test, &weights),
        weights,
    })
}

/// Encodes `states` with the frozen `encoder` and probes the latents.
pub fn probe_embedding(encoder: &Mlp, states: &Mat, targets: &[f64]) -> Result<ProbeReport> {
    probe_latents(&encoder.forward(states)?, targets)
}

/// States visited by a noisy goal-seeking policy, which crosses the hazards
/// often, labelled with the Monte-Carlo target of `head` along each episode.
pub fn probe_dataset(env: &PointHazard2DEnv, episodes: usize, noise: f64, gamma: f64, head: HeadVariant, seed: u64) -> Result<(Mat, Vec<f64>)> {
    let normal = rand_distr::Normal::new(0.0, noise).map_err(|e| Error::InvalidArgument(format!("probe noise {noise}: {e}")))?;
    let mut rng = SeedStreams::new(seed).rng(Stream::Evaluation);
    let (mut states, mut targets) = (Vec::new(), Vec::new());
    for _ in 0..episodes {
        let tr = run_episode(
            env,
            |s, r| {
                let d = env.goal_direction(s);
                Ok(d.iter().map(|v| (v + rand_distr::Distribution::sample(&normal, r)).clamp(-1.0, 1.0)).collect())
            },
            &mut rng,
        )?;
        let (v, f) = onpolicy_targets(&tr.costs(), gamma);
        targets.extend(match head {
            HeadVariant::Feasibility => f,
            HeadVariant::CostValue => v,
        });
        states.extend(tr.transitions().iter().map(|t| t.state.clone()));
    }
    let rows: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
    Ok((rows_to_mat(&rows), targets))
}
