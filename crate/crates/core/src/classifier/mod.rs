//! Fully-connected softmax classifier with analytic log-probability gradients.
//!
//! Parameters are flattened layer by layer: the weight matrix row by row
//! (so `vec(Θᵀ)`), followed by the bias vector.

mod dataset;
mod gradcheck;
mod train;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub use dataset::{ImageShape, LabeledDataset};
pub use gradcheck::{finite_diff_check, DEFAULT_FD_STEP};
pub use train::{accuracy, train_sgd, TrainConfig, Trained};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Identity,
    Relu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative at pre-activation `z`, given the activation output `out`.
    fn derivative(self, z: f64, out: f64) -> f64 {
        match self {
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidModel(format!("unknown activation `{other}`"))),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log softmax(z)`.
pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Softmax probabilities, floored at the smallest positive normal so that
/// every class keeps a strictly positive probability.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    log_softmax(z)
        .into_iter()
        .map(|v| v.exp().max(f64::MIN_POSITIVE))
        .collect()
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: DenseMatrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(weights: DenseMatrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::InvalidModel(format!(
                "bias of length {} for a layer with {} outputs",
                bias.len(),
                weights.rows()
            )));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidModel("non-finite bias".into()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

/// Which trainable parameters a gradient is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSelection {
    All,
    Layer(usize),
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Pre-activations `i_l`, one per layer.
    pre: Vec<Vec<f64>>,
    /// Outputs `o_0 = x, o_1, …, o_L`; the last entry holds the logits.
    outputs: Vec<Vec<f64>>,
}

impl ForwardPass {
    pub fn logits(&self) -> &[f64] {
        self.outputs.last().expect("forward pass has at least the input")
    }

    pub fn log_probs(&self) -> Vec<f64> {
        log_softmax(self.logits())
    }

    pub fn probs(&self) -> Vec<f64> {
        softmax(self.logits())
    }
}

/// Per-class gradients `∂ log P(y|·)` together with the probabilities they were taken at.
#[derive(Debug, Clone)]
pub struct ScoreGradients {
    pub probs: Vec<f64>,
    /// `K × p`; row `y` is `∂ log P(y|·)`.
    pub grads: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    layers: Vec<Layer>,
}

impl ClassifierModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::InvalidModel("model needs at least one layer".into()))?;
        if last.activation != Activation::Identity {
            return Err(Error::InvalidModel(format!(
                "final layer must be identity (logits), found {}",
                last.activation
            )));
        }
        if last.outputs() < 2 {
            return Err(Error::InvalidModel("a classifier needs at least two classes".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].inputs() != pair[0].outputs() {
                return Err(Error::InvalidModel(format!(
                    "layer {} expects {} inputs but layer {} produces {}",
                    l + 1,
                    pair[1].inputs(),
                    l,
                    pair[0].outputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights and zero biases. `widths` lists `k_0, …, k_L`;
    /// hidden layers use `hidden`, the output layer is identity.
    pub fn random(widths: &[usize], hidden: Activation, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidModel(format!("invalid architecture {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = widths.len() - 1;
        let layers = (0..depth)
            .map(|l| {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    DenseMatrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-limit..limit));
                let activation = if l + 1 == depth {
                    Activation::Identity
                } else {
                    hidden
                };
                Layer::new(weights, vec![0.0; fan_out], activation)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn class_count(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// `k_0, k_1, …, k_L`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::outputs))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Position of layer `l`'s parameters inside the flattened vector.
    pub fn layer_param_range(&self, l: usize) -> Result<Range<usize>> {
        if l >= self.layers.len() {
            return Err(Error::InvalidTarget(format!(
                "layer {l} out of range for a {}-layer model",
                self.layers.len()
            )));
        }
        let start: usize = self.layers[..l].iter().map(Layer::param_count).sum();
        Ok(start..start + self.layers[l].param_count())
    }

    pub fn selection_range(&self, selection: ParamSelection) -> Result<Range<usize>> {
        match selection {
            ParamSelection::All => Ok(0..self.param_count()),
            ParamSelection::Layer(l) => self.layer_param_range(l),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Same architecture, parameters taken from a flattened vector.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (rows, cols) = (layer.outputs(), layer.inputs());
            let weights = DenseMatrix::new(rows, cols, params[offset..offset + rows * cols].to_vec())?;
            offset += rows * cols;
            let bias = params[offset..offset + rows].to_vec();
            offset += rows;
            layers.push(Layer::new(weights, bias, layer.activation)?);
        }
        Self::new(layers)
    }

    /// Adds `scale * delta` to the flattened parameters in place.
    pub fn add_to_params(&mut self, scale: f64, delta: &[f64]) -> Result<()> {
        if delta.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                delta.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let n = layer.weights.rows() * layer.weights.cols();
            for r in 0..layer.weights.rows() {
                let cols = layer.weights.cols();
                let src = &delta[offset + r * cols..offset + (r + 1) * cols];
                for (w, d) in layer.weights.row_mut(r).iter_mut().zip(src) {
                    *w += scale * d;
                }
            }
            offset += n;
            for (b, d) in layer.bias.iter_mut().zip(&delta[offset..]) {
                *b += scale * d;
            }
            offset += layer.bias.len();
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("input contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn forward_pass(&self, x: &[f64]) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.to_vec());
        for layer in &self.layers {
            let input = outputs.last().expect("non-empty");
            let mut z = layer.weights.matvec(input)?;
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            let o = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            outputs.push(o);
        }
        Ok(ForwardPass { pre, outputs })
    }

    /// Class probabilities `P(y|x, θ)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_pass(x)?.probs())
    }

    pub fn log_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_pass(x)?.log_probs())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(self.forward_pass(x)?.logits()))
    }

    /// Back-propagates `upstream = ∂/∂logits` from the top layer down to
    /// `lowest`. For every visited layer `sink(l, δ_l, o_{l-1})` receives the
    /// pre-activation gradient and the layer input. Returns the input
    /// gradient when `lowest == 0` and `want_input` is set.
    fn backprop(
        &self,
        pass: &ForwardPass,
        upstream: &[f64],
        lowest: usize,
        want_input: bool,
        mut sink: impl FnMut(usize, &[f64], &[f64]),
    ) -> Option<Vec<f64>> {
        let mut grad_out = upstream.to_vec();
        for l in (lowest..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let delta: Vec<f64> = grad_out
                .iter()
                .zip(&pass.pre[l])
                .zip(&pass.outputs[l + 1])
                .map(|((g, &z), &o)| g * layer.activation.derivative(z, o))
                .collect();
            sink(l, &delta, &pass.outputs[l]);
            if l > lowest || want_input {
                grad_out = layer
                    .weights
                    .tr_matvec(&delta)
                    .expect("layer shapes are validated at construction");
            }
        }
        (lowest == 0 && want_input).then_some(grad_out)
    }

    /// Writes `δ_l ⊗ o_{l-1}` and `δ_l` into `dest` at layer `l`'s offset
    /// relative to `base`.
    fn accumulate_layer_grad(&self, l: usize, delta: &[f64], input: &[f64], dest: &mut [f64], base: usize) {
        let start: usize = self.layers[..l].iter().map(Layer::param_count).sum::<usize>() - base;
        let cols = input.len();
        for (i, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &mut dest[start + i * cols..start + (i + 1) * cols];
            for (g, &o) in row.iter_mut().zip(input) {
                *g += d * o;
            }
        }
        let bias_start = start + delta.len() * cols;
        for (g, &d) in dest[bias_start..bias_start + delta.len()].iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Per-class gradients of `log P(y|x, θ)` with respect to the input.
    pub fn input_score_gradients(&self, x: &[f64]) -> Result<ScoreGradients> {
        let pass = self.forward_pass(x)?;
        let probs = pass.probs();
        let k = probs.len();
        let mut grads = DenseMatrix::zeros(k, self.input_dim());
        let exact = softmax_exact(pass.logits());
        for y in 0..k {
            let upstream = score_upstream(&exact, y);
            let g = self
                .backprop(&pass, &upstream, 0, true, |_, _, _| {})
                .expect("input gradient requested");
            grads.row_mut(y).copy_from_slice(&g);
        }
        Ok(ScoreGradients { probs, grads })
    }

    /// Per-class gradients of `log P(y|x, θ)` with respect to the selected
    /// parameters, in flattening order.
    pub fn param_score_gradients(&self, x: &[f64], selection: ParamSelection) -> Result<ScoreGradients> {
        let range = self.selection_range(selection)?;
        let lowest = match selection {
            ParamSelection::All => 0,
            ParamSelection::Layer(l) => l,
        };
        let pass = self.forward_pass(x)?;
        let probs = pass.probs();
        let exact = softmax_exact(pass.logits());
        let k = probs.len();
        let p = range.len();
        let mut data = vec![0.0; k * p];
        for y in 0..k {
            let upstream = score_upstream(&exact, y);
            let row = &mut data[y * p..(y + 1) * p];
            self.backprop(&pass, &upstream, lowest, false, |l, delta, input| {
                if selection == ParamSelection::All || selection == ParamSelection::Layer(l) {
                    self.accumulate_layer_grad(l, delta, input, row, range.start);
                }
            });
        }
        Ok(ScoreGradients {
            probs,
            grads: DenseMatrix::new(k, p, data)?,
        })
    }

    /// `K × k_0` matrix whose row `y` is `∂_x log P(y|x, θ)`.
    pub fn logprob_grad_input(&self, x: &[f64]) -> Result<DenseMatrix> {
        Ok(self.input_score_gradients(x)?.grads)
    }

    /// `K × p` matrix whose row `y` is `∂_θ log P(y|x, θ)` over the selection.
    pub fn logprob_grad_params(&self, x: &[f64], selection: ParamSelection) -> Result<DenseMatrix> {
        Ok(self.param_score_gradients(x, selection)?.grads)
    }

    /// Adds the gradient of `-log P(y|x, θ)` over all parameters into `grad`
    /// and returns the loss.
    pub fn accumulate_loss_gradient(&self, x: &[f64], y: usize, grad: &mut [f64]) -> Result<f64> {
        let pass = self.forward_pass(x)?;
        let log_probs = pass.log_probs();
        let mut upstream: Vec<f64> = log_probs.iter().map(|v| v.exp()).collect();
        upstream[y] -= 1.0;
        self.backprop(&pass, &upstream, 0, false, |l, delta, input| {
            self.accumulate_layer_grad(l, delta, input, grad, 0);
        });
        Ok(-log_probs[y])
    }
}

/// Unfloored softmax, used where the probabilities enter gradients.
fn softmax_exact(z: &[f64]) -> Vec<f64> {
    log_softmax(z).into_iter().map(f64::exp).collect()
}

/// `e_y - g(z)`, the gradient of `log g(z)_y` with respect to the logits.
fn score_upstream(probs: &[f64], y: usize) -> Vec<f64> {
    let mut up: Vec<f64> = probs.iter().map(|p| -p).collect();
    up[y] += 1.0;
    up
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Logits `(wᵀx, 0)`.
    pub(crate) fn binary_logistic(w: &[f64]) -> ClassifierModel {
        let weights = DenseMatrix::from_rows(&[w.to_vec(), vec![0.0; w.len()]]).unwrap();
        ClassifierModel::new(vec![Layer::new(weights, vec![0.0, 0.0], Activation::Identity).unwrap()]).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[3f64.ln(), 0.0]);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        let p = softmax(&[1e4, -1e4, 3.0]);
        assert!(p.iter().all(|&v| v > 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_normalizes() {
        let model = ClassifierModel::random(&[6, 5, 4], Activation::Sigmoid, 3).unwrap();
        let p = model.forward(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(p.len(), 4);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(model.forward(&[0.0; 5]).is_err());
    }

    #[test]
    fn binary_logistic_input_gradient() {
        let model = binary_logistic(&[1.0, 1.0]);
        let g = model.logprob_grad_input(&[0.0, 0.0]).unwrap();
        assert_eq!(g.row(0), &[0.5, 0.5]);
        assert_eq!(g.row(1), &[-0.5, -0.5]);
    }

    #[test]
    fn zero_weights_give_zero_gradients() {
        let model = ClassifierModel::random(&[4, 3, 3], Activation::Sigmoid, 1)
            .unwrap()
            .with_params(&vec![0.0; 4 * 3 + 3 + 3 * 3 + 3])
            .unwrap();
        let g = model.logprob_grad_input(&[0.3, 0.1, 0.9, 0.5]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn probability_weighted_scores_vanish() {
        let model = ClassifierModel::random(&[5, 7, 4], Activation::Relu, 9).unwrap();
        let x = [0.2, 0.9, 0.4, 0.1, 0.7];
        for scores in [
            model.input_score_gradients(&x).unwrap(),
            model.param_score_gradients(&x, ParamSelection::All).unwrap(),
        ] {
            for c in 0..scores.grads.cols() {
                let s: f64 = (0..scores.probs.len()).map(|y| scores.probs[y] * scores.grads[(y, c)]).sum();
                assert!(s.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn binary_logistic_param_gradient() {
        let model = binary_logistic(&[1.0, 1.0]);
        let g = model.logprob_grad_params(&[1.0, 0.0], ParamSelection::All).unwrap();
        // logits (1, 0): s = σ(1)
        let s = 1.0 / (1.0 + (-1.0f64).exp());
        assert_eq!(g.cols(), 6);
        assert!((g[(0, 0)] - (1.0 - s)).abs() < 1e-15);
        assert_eq!(g[(0, 1)], 0.0);

        let model = binary_logistic(&[0.0, 0.0]);
        let g = model.logprob_grad_params(&[1.0, 0.0], ParamSelection::All).unwrap();
        // layout W00, W01, W10, W11, b0, b1
        assert_eq!(g.row(0), &[0.5, 0.0, -0.5, 0.0, 0.5, -0.5]);
    }

    #[test]
    fn layer_selection_is_contiguous_slice() {
        let model = ClassifierModel::random(&[4, 6, 5, 3], Activation::Sigmoid, 4).unwrap();
        let x = [0.5, 0.25, 0.75, 1.0];
        let all = model.logprob_grad_params(&x, ParamSelection::All).unwrap();
        for l in 0..model.layer_count() {
            let range = model.layer_param_range(l).unwrap();
            let part = model.logprob_grad_params(&x, ParamSelection::Layer(l)).unwrap();
            for y in 0..3 {
                assert_eq!(part.row(y), &all.row(y)[range.clone()]);
            }
        }
        assert!(model.logprob_grad_params(&x, ParamSelection::Layer(3)).is_err());
    }

    #[test]
    fn zero_input_zeroes_first_layer_weight_gradient() {
        let model = ClassifierModel::random(&[3, 4, 2], Activation::Sigmoid, 8).unwrap();
        let g = model.logprob_grad_params(&[0.0; 3], ParamSelection::Layer(0)).unwrap();
        for y in 0..2 {
            assert!(g.row(y)[..12].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn flatten_round_trip() {
        let model = ClassifierModel::random(&[7, 5, 3], Activation::Relu, 2).unwrap();
        let again = model.with_params(&model.flatten()).unwrap();
        assert_eq!(model, again);
    }

    #[test]
    fn construction_validation() {
        let w = DenseMatrix::zeros(3, 2);
        let hidden = Layer::new(w.clone(), vec![0.0; 3], Activation::Sigmoid).unwrap();
        assert!(ClassifierModel::new(vec![hidden.clone()]).is_err());
        let out = Layer::new(DenseMatrix::zeros(2, 4), vec![0.0; 2], Activation::Identity).unwrap();
        assert!(ClassifierModel::new(vec![hidden, out]).is_err());
        assert!(Layer::new(w, vec![0.0; 2], Activation::Identity).is_err());
        assert!("tanh".parse::<Activation>().is_err());
    }
}
