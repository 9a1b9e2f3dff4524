use serde::{Deserialize, Serialize};

use super::tape::Mat;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments, one accumulator pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Mat>,
    pub second: Vec<Mat>,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)], config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&s| Mat::zeros(s)).collect(),
            second: shapes.iter().map(|&s| Mat::zeros(s)).collect(),
        }
    }

    pub fn for_params(params: &[&Mat], config: AdamConfig) -> Self {
        let shapes: Vec<_> = params.iter().map(|p| p.dim()).collect();
        Self::new(&shapes, config)
    }

    /// One update `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [&mut Mat], grads: &[Mat]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::shape(
                format!("{} parameter tensors", self.first.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.dim() != g.dim() || p.dim() != m.dim() {
                return Err(Error::shape(format!("{:?}", m.dim()), format!("{:?} / {:?}", p.dim(), g.dim())));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let g = &grads[i];
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            ndarray::Zip::from(&mut **p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

/// `target <- (1 - tau) * target + tau * online`, elementwise.
pub fn ema_update(target: &mut [&mut Mat], online: &[&Mat], tau: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::shape(online.len(), target.len()));
    }
    for (t, o) in target.iter_mut().zip(online) {
        if t.dim() != o.dim() {
            return Err(Error::shape(format!("{:?}", o.dim()), format!("{:?}", t.dim())));
        }
        if tau == 1.0 {
            t.assign(o);
        } else {
            ndarray::Zip::from(&mut **t)
                .and(*o)
                .for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = array![[1.0, -2.0]];
        let mut adam = AdamState::new(&[(1, 2)], AdamConfig::default());
        adam.step(&mut [&mut p], &[Mat::zeros((1, 2))]).unwrap();
        assert_eq!(p, array![[1.0, -2.0]]);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // m_hat = g, v_hat = g^2 at step 1, so the update is lr * g / (|g| + eps).
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let g = array![[0.3, -4.0]];
        let mut p = array![[0.0, 0.0]];
        let mut adam = AdamState::new(&[(1, 2)], cfg);
        adam.step(&mut [&mut p], &[g.clone()]).unwrap();
        for j in 0..2 {
            let expected = -cfg.lr * g[[0, j]] / (g[[0, j]].abs() + cfg.eps);
            assert!((p[[0, j]] - expected).abs() < 1e-15, "{} vs {}", p[[0, j]], expected);
        }
    }

    #[test]
    fn deterministic_across_identical_states() {
        let g = array![[0.5, 0.25]];
        let run = || {
            let mut p = array![[1.0, 1.0]];
            let mut adam = AdamState::new(&[(1, 2)], AdamConfig::default());
            for _ in 0..3 {
                adam.step(&mut [&mut p], &[g.clone()]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn ema_endpoints_and_arithmetic() {
        let online = array![[1.0]];
        let mut t = array![[0.0]];
        ema_update(&mut [&mut t], &[&online], 0.0).unwrap();
        assert_eq!(t[[0, 0]], 0.0);
        ema_update(&mut [&mut t], &[&online], 0.05).unwrap();
        assert!((t[[0, 0]] - 0.05).abs() < 1e-15);
        ema_update(&mut [&mut t], &[&online], 1.0).unwrap();
        assert_eq!(t, online);
    }
}
