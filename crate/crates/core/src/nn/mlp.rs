use ndarray::Axis;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Mat, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: &mut Mat) {
        match self {
            Activation::Relu => x.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => x.mapv_inplace(f64::tanh),
            Activation::Identity => {}
        }
    }

    fn record(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => x,
        }
    }
}

/// Fully connected layer `y = act(x W + b)` with `W: in x out`, `b: 1 x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Mat,
    pub bias: Mat,
    pub activation: Activation,
}

impl Dense {
    /// Uniform init in `+-sqrt(1/fan_in)` for both weights and biases.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = (1.0 / inputs as f64).sqrt();
        let weight = Mat::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..=bound));
        let bias = Mat::from_shape_fn((1, outputs), |_| rng.random_range(-bound..=bound));
        Self {
            weight,
            bias,
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// Multilayer perceptron over batches (rows are samples).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Tape handles for one MLP's parameters, ordered `w0, b0, w1, b1, ...`.
///
/// Binding once and applying many times makes gradients from every
/// application accumulate on the same leaves.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    shapes: Vec<(usize, usize)>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients in parameter order, zero-filled where nothing flowed.
    pub fn grads(&self, grads: &super::Grads) -> Vec<Mat> {
        self.vars
            .iter()
            .zip(&self.shapes)
            .map(|(&v, &shape)| grads.get_or_zeros(v, shape))
            .collect()
    }
}

impl Mlp {
    /// Builds a net with the given layer sizes; `hidden` activation on every
    /// layer but the last, which uses `output`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Dense::new(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::shape(
                    format!("layer input {}", pair[0].outputs()),
                    pair[1].inputs(),
                ));
            }
        }
        for l in &layers {
            if l.bias.dim() != (1, l.outputs()) {
                return Err(Error::shape(format!("bias 1x{}", l.outputs()), format!("{:?}", l.bias.dim())));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Dense::outputs));
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<&Mat> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.params().iter().map(|p| p.dim()).collect()
    }

    /// Zeroes the final layer so every input maps to the same (zero) output.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weight.fill(0.0);
        last.bias.fill(0.0);
    }

    fn check_input(&self, input: &Mat) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("input width {}", self.input_dim()),
                input.ncols(),
            ));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MLP input".into()));
        }
        Ok(())
    }

    /// Inference-only forward pass over a batch.
    pub fn forward(&self, input: &Mat) -> Result<Mat> {
        self.check_input(input)?;
        Ok(self.forward_unchecked(input))
    }

    pub(crate) fn forward_unchecked(&self, input: &Mat) -> Mat {
        let mut x = input.clone();
        for layer in &self.layers {
            let mut y = x.dot(&layer.weight);
            y += &layer.bias;
            layer.activation.apply(&mut y);
            x = y;
        }
        x
    }

    /// Output together with the pre-activation of the last layer.
    pub fn forward_with_preactivation(&self, input: &Mat) -> Result<(Mat, Mat)> {
        self.check_input(input)?;
        let mut x = input.clone();
        let mut pre = Mat::zeros((0, 0));
        for layer in &self.layers {
            let mut y = x.dot(&layer.weight);
            y += &layer.bias;
            pre = y.clone();
            layer.activation.apply(&mut y);
            x = y;
        }
        Ok((x, pre))
    }

    /// Smallest `|pre-activation|` over every ReLU unit and row: how far the
    /// batch sits from a kink. Finite differences with a larger step are
    /// not trustworthy there.
    pub fn relu_margin(&self, input: &Mat) -> Result<f64> {
        self.check_input(input)?;
        let mut x = input.clone();
        let mut margin = f64::INFINITY;
        for layer in &self.layers {
            let mut y = x.dot(&layer.weight);
            y += &layer.bias;
            if layer.activation == Activation::Relu {
                margin = y.iter().fold(margin, |m, v| m.min(v.abs()));
            }
            layer.activation.apply(&mut y);
            x = y;
        }
        Ok(margin)
    }

    /// Single-sample convenience wrapper.
    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let m = Mat::from_shape_vec((1, input.len()), input.to_vec())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(self.forward(&m)?.index_axis(Axis(0), 0).to_vec())
    }

    /// Records the parameters as trainable leaves.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.bind_with(tape, true)
    }

    /// Records the parameters as constants (no gradient flows to them).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let mut vars = Vec::with_capacity(self.layers.len() * 2);
        let mut shapes = Vec::with_capacity(self.layers.len() * 2);
        for p in self.params() {
            shapes.push(p.dim());
            let v = if trainable {
                tape.param(p.clone())
            } else {
                tape.constant(p.clone())
            };
            vars.push(v);
        }
        Bound { vars, shapes }
    }

    /// Forward pass recorded on `tape` using previously bound parameters.
    pub fn apply(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        Ok(self.apply_with_preactivation(tape, bound, x)?.0)
    }

    /// Like [`Mlp::apply`], also returning the last layer's pre-activation.
    pub fn apply_with_preactivation(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<(Var, Var)> {
        let width = tape.value(x).ncols();
        if width != self.input_dim() {
            return Err(Error::shape(format!("input width {}", self.input_dim()), width));
        }
        if tape.value(x).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MLP input".into()));
        }
        let mut h = x;
        let mut last_pre = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = bound.vars[2 * i];
            let b = bound.vars[2 * i + 1];
            let lin = tape.matmul(h, w);
            let pre = tape.add_row(lin, b);
            last_pre = pre;
            h = layer.activation.record(tape, pre);
        }
        Ok((h, last_pre))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Dense {
            weight: Mat::eye(3),
            bias: Mat::zeros((1, 3)),
            activation: Activation::Identity,
        };
        let mlp = Mlp::from_layers(vec![layer]).unwrap();
        let x = array![[0.5, -1.0, 2.0]];
        assert_eq!(mlp.forward(&x).unwrap(), x);
    }

    #[test]
    fn forward_matches_straight_line_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(&[4, 7, 3], Activation::Tanh, Activation::Identity, &mut rng);
        let x = Mat::from_shape_fn((5, 4), |(i, j)| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
        let out = mlp.forward(&x).unwrap();
        let l0 = &mlp.layers()[0];
        let l1 = &mlp.layers()[1];
        for r in 0..5 {
            for o in 0..3 {
                let mut acc = l1.bias[[0, o]];
                for h in 0..7 {
                    let mut pre = l0.bias[[0, h]];
                    for i in 0..4 {
                        pre += x[[r, i]] * l0.weight[[i, h]];
                    }
                    acc += pre.tanh() * l1.weight[[h, o]];
                }
                assert!((acc - out[[r, o]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_and_nan_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new(&[2, 2], Activation::Relu, Activation::Identity, &mut rng);
        assert!(matches!(mlp.forward(&Mat::zeros((1, 3))), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(mlp.forward(&array![[f64::NAN, 0.0]]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn tape_forward_equals_plain_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mlp = Mlp::new(&[3, 8, 8, 2], Activation::Relu, Activation::Tanh, &mut rng);
        let x = Mat::from_shape_fn((4, 3), |(i, j)| ((i * 3 + j) as f64).sin());
        let mut tape = Tape::new();
        let b = mlp.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let y = mlp.apply(&mut tape, &b, xv).unwrap();
        assert_eq!(tape.value(y), &mlp.forward(&x).unwrap());
    }

    #[test]
    fn init_is_within_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Dense::new(16, 4, Activation::Relu, &mut rng);
        assert!(d.weight.iter().all(|w| w.abs() <= 0.25));
    }
}
