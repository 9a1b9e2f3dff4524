//! Central finite-difference gradient checking.

use super::tape::Mat;

/// Anything exposing an ordered list of parameter tensors.
pub trait Parameterized {
    fn params_mut(&mut self) -> Vec<&mut Mat>;
}

impl Parameterized for super::Mlp {
    fn params_mut(&mut self) -> Vec<&mut Mat> {
        super::Mlp::params_mut(self)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub step: f64,
    /// Denominator floor for the relative error.
    pub floor: f64,
    /// Check at most this many entries per tensor (evenly strided); `None` checks all.
    pub max_entries_per_tensor: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
            max_entries_per_tensor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(tensor, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` (one gradient per tensor of `model.params_mut()`)
/// against central differences of `loss`.
pub fn grad_check<T, F>(model: &T, loss: F, analytic: &[Mat], opts: GradCheckOptions) -> GradCheckReport
where
    T: Parameterized + Clone,
    F: Fn(&T) -> f64,
{
    let mut probe = model.clone();
    let n_tensors = probe.params_mut().len();
    assert_eq!(n_tensors, analytic.len(), "one analytic gradient per parameter tensor");

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for t in 0..n_tensors {
        let len = probe.params_mut()[t].len();
        assert_eq!(len, analytic[t].len(), "gradient {t} shape mismatch");
        let stride = match opts.max_entries_per_tensor {
            Some(m) if m > 0 && len > m => len.div_ceil(m),
            _ => 1,
        };
        for flat in (0..len).step_by(stride) {
            let original = *probe.params_mut()[t].iter().nth(flat).expect("in range");
            *probe.params_mut()[t].iter_mut().nth(flat).expect("in range") = original + opts.step;
            let plus = loss(&probe);
            *probe.params_mut()[t].iter_mut().nth(flat).expect("in range") = original - opts.step;
            let minus = loss(&probe);
            *probe.params_mut()[t].iter_mut().nth(flat).expect("in range") = original;

            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = *analytic[t].iter().nth(flat).expect("in range");
            let err = relative_error(a, numeric, opts.floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((t, flat, a, numeric));
            }
        }
    }
    report
}
