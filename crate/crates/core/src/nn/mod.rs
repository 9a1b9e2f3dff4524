//! Minimal differentiable stack: batch matrices, reverse-mode tape, dense
//! MLPs, Adam, EMA target copies, gradient checking and parameter files.

mod adam;
mod gradcheck;
mod mlp;
mod serialize;
mod tape;

pub use adam::{ema_update, AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, Parameterized};
pub use mlp::{Activation, Bound, Dense, Mlp};
pub use serialize::{ParamFile, TensorRecord, PARAM_FORMAT, PARAM_VERSION};
pub use tape::{log_softmax_rows, softmax_rows, Grads, Mat, Tape, Var};

/// `n x d` matrix from a list of equal-length rows.
pub fn rows_to_mat(rows: &[&[f64]]) -> Mat {
    let d = rows.first().map_or(0, |r| r.len());
    let mut m = Mat::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), d, "ragged rows");
        m.row_mut(i).assign(&ndarray::ArrayView1::from(*r));
    }
    m
}

/// Horizontal concatenation of two matrices with equal row counts.
pub fn hcat(a: &Mat, b: &Mat) -> Mat {
    ndarray::concatenate(ndarray::Axis(1), &[a.view(), b.view()]).expect("row counts match")
}
