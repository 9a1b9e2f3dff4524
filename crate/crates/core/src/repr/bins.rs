use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Mat};

pub const DEFAULT_BINS: usize = 63;

/// `n` equally spaced bin centers spanning `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Bins {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bins need n >= 2 and lo < hi, got {n} over [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, n })
    }

    /// `[0, 1]`, the range of a feasibility score under binary costs.
    pub fn feasibility(n: usize) -> Self {
        Self::new(0.0, 1.0, n).expect("valid range")
    }

    /// `[0, 1 / (1 - gamma)]`, the range of a binary-cost value.
    pub fn cost_value(n: usize, gamma: f64) -> Self {
        Self::new(0.0, 1.0 / (1.0 - gamma), n).expect("valid range")
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        if j + 1 == self.n {
            self.hi
        } else {
            self.lo + j as f64 * self.width()
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.center(j)).collect()
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    /// Expected value of a probability vector over the centers.
    pub fn expectation(&self, probs: &[f64]) -> f64 {
        probs.iter().enumerate().map(|(j, p)| p * self.center(j)).sum()
    }

    /// Softmax of each logit row followed by [`Bins::expectation`].
    pub fn expectation_of_logits(&self, logits: &Mat) -> Vec<f64> {
        let probs = softmax_rows(logits);
        probs
            .rows()
            .into_iter()
            .map(|r| self.expectation(r.as_slice().expect("contiguous row")))
            .collect()
    }

    /// Two-hot weights `(j, w_j, w_{j+1})` for `v`, after clipping.
    fn straddle(&self, v: f64) -> (usize, f64, f64) {
        let v = self.clip(v);
        let mut j = (((v - self.lo) / self.width()).floor().max(0.0) as usize).min(self.n - 2);
        while j > 0 && self.center(j) > v {
            j -= 1;
        }
        while j + 2 < self.n && self.center(j + 1) <= v {
            j += 1;
        }
        let (bj, bk) = (self.center(j), self.center(j + 1));
        let hi_w = (v - bj) / (bk - bj);
        (j, 1.0 - hi_w, hi_w)
    }
}

/// Probability vector over fixed bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist {
    pub bins: Bins,
    pub probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(bins: Bins, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != bins.n {
            return Err(Error::shape(bins.n, probs.len()));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("probabilities must be >= 0 and sum to 1, got sum {sum}")));
        }
        Ok(Self { bins, probs })
    }

    pub fn from_logits(bins: Bins, logits: &[f64]) -> Result<Self> {
        let m = Mat::from_shape_vec((1, logits.len()), logits.to_vec()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::new(bins, softmax_rows(&m).into_raw_vec_and_offset().0)
    }

    pub fn expectation(&self) -> f64 {
        self.bins.expectation(&self.probs)
    }

    /// `KL(self || other)` with `0 log 0 = 0`.
    pub fn kl(&self, other: &DiscreteDist) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| p * (p.ln() - q.ln()))
            .sum()
    }
}

/// Splits the mass of `clip(value)` between its two neighbouring centers.
pub fn two_hot_project(value: f64, bins: &Bins) -> Result<DiscreteDist> {
    if value.is_nan() {
        return Err(Error::NonFinite("two-hot target".into()));
    }
    let (j, lo_w, hi_w) = bins.straddle(value);
    let mut probs = vec![0.0; bins.n];
    probs[j] = lo_w;
    probs[j + 1] = hi_w;
    Ok(DiscreteDist { bins: *bins, probs })
}

/// Row-wise two-hot targets, `values.len() x bins.n`.
pub fn two_hot_matrix(values: &[f64], bins: &Bins) -> Result<Mat> {
    let mut m = Mat::zeros((values.len(), bins.n));
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            return Err(Error::NonFinite("two-hot target".into()));
        }
        let (j, lo_w, hi_w) = bins.straddle(v);
        m[[i, j]] = lo_w;
        m[[i, j + 1]] = hi_w;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn center_value_is_one_hot() {
        let b = Bins::feasibility(63);
        for j in [0, 1, 17, 31, 62] {
            let d = two_hot_project(b.center(j), &b).unwrap();
            assert_eq!(d.probs[j], 1.0, "bin {j}");
            assert_eq!(d.probs.iter().filter(|&&p| p > 0.0).count(), 1);
        }
    }

    #[test]
    fn midpoint_splits_evenly() {
        let b = Bins::feasibility(63);
        let v = 0.5 * (b.center(10) + b.center(11));
        let d = two_hot_project(v, &b).unwrap();
        assert!((d.probs[10] - 0.5).abs() < 1e-12);
        assert!((d.probs[11] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_values_clip() {
        let b = Bins::feasibility(63);
        assert_eq!(two_hot_project(-0.3, &b).unwrap().probs[0], 1.0);
        assert_eq!(two_hot_project(7.0, &b).unwrap().probs[62], 1.0);
        assert!(two_hot_project(f64::NAN, &b).is_err());
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let b = Bins::feasibility(5);
        let d = two_hot_project(0.3, &b).unwrap();
        assert_eq!(d.kl(&d), 0.0);
    }

    #[test]
    fn cost_value_range() {
        let b = Bins::cost_value(63, 0.99);
        assert!((b.hi - 100.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn expectation_is_clipped_value(v in -0.5f64..1.5) {
            let b = Bins::feasibility(63);
            let d = two_hot_project(v, &b).unwrap();
            prop_assert!((d.expectation() - b.clip(v)).abs() <= 1e-12);
            let s: f64 = d.probs.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn matrix_rows_match_single_projection(vs in proptest::collection::vec(-1.0f64..2.0, 1..10)) {
            let b = Bins::feasibility(15);
            let m = two_hot_matrix(&vs, &b).unwrap();
            for (i, v) in vs.iter().enumerate() {
                let d = two_hot_project(*v, &b).unwrap();
                prop_assert_eq!(m.row(i).to_vec(), d.probs);
            }
        }
    }
}
