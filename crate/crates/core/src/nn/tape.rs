//! Reverse-mode differentiation over row-major batch matrices.
//!
//! Every value on the tape is a 2-D matrix whose rows are batch samples.
//! Scalars are `1 x 1` matrices. Nodes are appended in evaluation order, so
//! the backward sweep is a single reverse pass over the node list.

use ndarray::{s, Array2, Axis, Zip};

use crate::error::{Error, Result};

pub type Mat = Array2<f64>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Square(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    SumAll(Var),
    MeanAll(Var),
    RowSum(Var),
    Softmax(Var),
    LogSoftmax(Var),
    CosineRows { a: Var, b: Var, eps: f64 },
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
    requires_grad: bool,
}

/// Gradient tape: the recorded computation plus the machinery to
/// backpropagate through it once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar output with respect to every node that requires them.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros shaped like `shape` when nothing flowed there.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Mat {
        self.get(v).cloned().unwrap_or_else(|| Mat::zeros(shape))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Mat, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input; no gradient is ever produced for it.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf; gradients flow here.
    pub fn param(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Stop-gradient: a constant copy of `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(&[a, b]);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `x + bias` with a `1 x n` bias broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(bias));
        assert_eq!(bv.nrows(), 1, "bias must be a single row");
        assert_eq!(xv.ncols(), bv.ncols(), "bias width mismatch");
        let value = xv + bv;
        let rg = self.rg(&[x, bias]);
        self.push(value, Op::AddRow(x, bias), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        let rg = self.rg(&[a, b]);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub shape mismatch");
        let value = self.value(a) - self.value(b);
        let rg = self.rg(&[a, b]);
        self.push(value, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape mismatch");
        let value = self.value(a) * self.value(b);
        let rg = self.rg(&[a, b]);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// Scales each row of `x` by the matching entry of the `n x 1` column `col`.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Var {
        let (xv, cv) = (self.value(x), self.value(col));
        assert_eq!(cv.ncols(), 1, "mul_col expects a column");
        assert_eq!(xv.nrows(), cv.nrows(), "mul_col row mismatch");
        let value = xv * cv;
        let rg = self.rg(&[x, col]);
        self.push(value, Op::MulCol(x, col), rg)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let value = self.value(x) * k;
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale(x, k), rg)
    }

    pub fn add_scalar(&mut self, x: Var, k: f64) -> Var {
        let value = self.value(x) + k;
        let rg = self.rg(&[x]);
        self.push(value, Op::AddScalar(x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        let rg = self.rg(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(f64::tanh);
        let rg = self.rg(&[x]);
        self.push(value, Op::Tanh(x), rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v * v);
        let rg = self.rg(&[x]);
        self.push(value, Op::Square(x), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.nrows(), bv.nrows(), "concat row mismatch");
        let value = ndarray::concatenate(Axis(1), &[av.view(), bv.view()]).expect("concat");
        let rg = self.rg(&[a, b]);
        self.push(value, Op::ConcatCols(a, b), rg)
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let value = self.value(x).slice(s![.., start..end]).to_owned();
        let rg = self.rg(&[x]);
        self.push(value, Op::SliceCols(x, start), rg)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let value = Mat::from_elem((1, 1), self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(value, Op::SumAll(x), rg)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let value = Mat::from_elem((1, 1), m.sum() / m.len() as f64);
        let rg = self.rg(&[x]);
        self.push(value, Op::MeanAll(x), rg)
    }

    /// Per-row sum, `n x m -> n x 1`.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let value = self.value(x).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(&[x]);
        self.push(value, Op::RowSum(x), rg)
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let value = softmax_rows(self.value(x));
        let rg = self.rg(&[x]);
        self.push(value, Op::Softmax(x), rg)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let value = log_softmax_rows(self.value(x));
        let rg = self.rg(&[x]);
        self.push(value, Op::LogSoftmax(x), rg)
    }

    /// Row-wise cosine similarity `<a_i, b_i> / max(|a_i| |b_i|, eps)`, `n x 1`.
    pub fn cosine_rows(&mut self, a: Var, b: Var, eps: f64) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.dim(), bv.dim(), "cosine shape mismatch");
        let n = av.nrows();
        let mut value = Mat::zeros((n, 1));
        for i in 0..n {
            let (ra, rb) = (av.row(i), bv.row(i));
            let dot = ra.dot(&rb);
            let denom = (ra.dot(&ra).sqrt() * rb.dot(&rb).sqrt()).max(eps);
            value[[i, 0]] = dot / denom;
        }
        let rg = self.rg(&[a, b]);
        self.push(value, Op::CosineRows { a, b, eps }, rg)
    }

    /// Backpropagates from the scalar `output`. A tape can be swept once.
    pub fn backward(&mut self, output: Var) -> Result<Grads> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.value(output).dim() != (1, 1) {
            return Err(Error::shape("1x1 output", format!("{:?}", self.value(output).dim())));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Mat::ones((1, 1)));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.requires_grad(a) {
                        let ga = g.dot(&self.value(b).t());
                        accumulate(&mut grads, a, ga);
                    }
                    if self.requires_grad(b) {
                        let gb = self.value(a).t().dot(&g);
                        accumulate(&mut grads, b, gb);
                    }
                }
                Op::AddRow(x, bias) => {
                    if self.requires_grad(bias) {
                        accumulate(&mut grads, bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.requires_grad(x) {
                        accumulate(&mut grads, x, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.requires_grad(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if self.requires_grad(b) {
                        accumulate(&mut grads, b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.requires_grad(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if self.requires_grad(b) {
                        accumulate(&mut grads, b, -g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.requires_grad(a) {
                        accumulate(&mut grads, a, &g * self.value(b));
                    }
                    if self.requires_grad(b) {
                        accumulate(&mut grads, b, &g * self.value(a));
                    }
                }
                Op::MulCol(x, col) => {
                    if self.requires_grad(x) {
                        accumulate(&mut grads, x, &g * self.value(col));
                    }
                    if self.requires_grad(col) {
                        let gc = (&g * self.value(x)).sum_axis(Axis(1)).insert_axis(Axis(1));
                        accumulate(&mut grads, col, gc);
                    }
                }
                Op::Scale(x, k) => accumulate(&mut grads, x, g * k),
                Op::AddScalar(x) => accumulate(&mut grads, x, g),
                Op::Relu(x) => {
                    let mut gx = g;
                    Zip::from(&mut gx)
                        .and(self.value(x))
                        .for_each(|gi, &xi| {
                            if xi <= 0.0 {
                                *gi = 0.0;
                            }
                        });
                    accumulate(&mut grads, x, gx);
                }
                Op::Tanh(x) => {
                    let mut gx = g;
                    Zip::from(&mut gx)
                        .and(&node.value)
                        .for_each(|gi, &yi| *gi *= 1.0 - yi * yi);
                    accumulate(&mut grads, x, gx);
                }
                Op::Square(x) => {
                    let gx = g * self.value(x) * 2.0;
                    accumulate(&mut grads, x, gx);
                }
                Op::ConcatCols(a, b) => {
                    let wa = self.value(a).ncols();
                    if self.requires_grad(a) {
                        accumulate(&mut grads, a, g.slice(s![.., ..wa]).to_owned());
                    }
                    if self.requires_grad(b) {
                        accumulate(&mut grads, b, g.slice(s![.., wa..]).to_owned());
                    }
                }
                Op::SliceCols(x, start) => {
                    let mut gx = Mat::zeros(self.value(x).dim());
                    let end = start + g.ncols();
                    gx.slice_mut(s![.., start..end]).assign(&g);
                    accumulate(&mut grads, x, gx);
                }
                Op::SumAll(x) => {
                    let gx = Mat::from_elem(self.value(x).dim(), g[[0, 0]]);
                    accumulate(&mut grads, x, gx);
                }
                Op::MeanAll(x) => {
                    let xv = self.value(x);
                    let gx = Mat::from_elem(xv.dim(), g[[0, 0]] / xv.len() as f64);
                    accumulate(&mut grads, x, gx);
                }
                Op::RowSum(x) => {
                    let dim = self.value(x).dim();
                    let gx = g
                        .broadcast(dim)
                        .expect("row-sum gradient broadcast")
                        .to_owned();
                    accumulate(&mut grads, x, gx);
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let inner = (&g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let gx = y * &(&g - &inner);
                    accumulate(&mut grads, x, gx);
                }
                Op::LogSoftmax(x) => {
                    let y = node.value.mapv(f64::exp);
                    let gsum = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let gx = &g - &(y * &gsum);
                    accumulate(&mut grads, x, gx);
                }
                Op::CosineRows { a, b, eps } => {
                    let (av, bv) = (self.value(a), self.value(b));
                    let mut ga = Mat::zeros(av.dim());
                    let mut gb = Mat::zeros(bv.dim());
                    for i in 0..av.nrows() {
                        let (ra, rb) = (av.row(i), bv.row(i));
                        let gi = g[[i, 0]];
                        let dot = ra.dot(&rb);
                        let (na, nb) = (ra.dot(&ra).sqrt(), rb.dot(&rb).sqrt());
                        let denom = na * nb;
                        if denom > eps {
                            let c = dot / denom;
                            for j in 0..ra.len() {
                                ga[[i, j]] = gi * (rb[j] / denom - c * ra[j] / (na * na));
                                gb[[i, j]] = gi * (ra[j] / denom - c * rb[j] / (nb * nb));
                            }
                        } else {
                            for j in 0..ra.len() {
                                ga[[i, j]] = gi * rb[j] / eps;
                                gb[[i, j]] = gi * ra[j] / eps;
                            }
                        }
                    }
                    if self.requires_grad(a) {
                        accumulate(&mut grads, a, ga);
                    }
                    if self.requires_grad(b) {
                        accumulate(&mut grads, b, gb);
                    }
                }
            }
        }

        // Only leaf gradients are kept; intermediate buffers were taken above.
        Ok(Grads { grads })
    }
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

pub fn softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn log_softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}
