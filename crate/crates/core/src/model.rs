//! Dense ReLU classifier with activation capture, Monte-Carlo dropout,
//! a small SGD trainer and FGSM perturbation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::image::{clamp_unit, ImageTensor, LabeledDataset};
use crate::rng::{derive_seed, stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softmax,
}

/// One fully connected layer. `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
    dropout: f64,
}

impl DenseLayer {
    pub fn new(
        outputs: usize,
        inputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
        dropout: f64,
    ) -> Result<Self> {
        if outputs == 0 || inputs == 0 {
            return Err(Error::InvalidModel(format!("empty layer {outputs}x{inputs}")));
        }
        if weights.len() != outputs * inputs {
            return Err(Error::DimensionMismatch {
                expected: outputs * inputs,
                found: weights.len(),
            });
        }
        if bias.len() != outputs {
            return Err(Error::DimensionMismatch {
                expected: outputs,
                found: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidModel(format!("dropout rate {dropout} outside [0, 1)")));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
            activation,
            dropout,
        })
    }

    /// Builds a layer from a list of weight rows.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        bias: Vec<f64>,
        activation: Activation,
        dropout: f64,
    ) -> Result<Self> {
        let outputs = rows.len();
        let inputs = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != inputs) {
            return Err(Error::InvalidModel("ragged weight rows".into()));
        }
        let weights = rows.into_iter().flatten().collect();
        Self::new(outputs, inputs, weights, bias, activation, dropout)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b),
        );
    }
}

/// Post-activation outputs of every hidden neuron, concatenated layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    values: Vec<f64>,
    layer_offsets: Vec<usize>,
}

impl ActivationTrace {
    /// A trace treated as a single layer.
    pub fn flat(values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            values,
            layer_offsets: vec![0, n],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `layer_offsets[l]..layer_offsets[l + 1]` spans hidden layer `l`.
    pub fn layer_offsets(&self) -> &[usize] {
        &self.layer_offsets
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        &self.values[self.layer_offsets[l]..self.layer_offsets[l + 1]]
    }
}

/// Enables inverted dropout on hidden layers for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    /// Replaces every hidden layer's configured rate when set.
    pub rate: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub probs: Vec<f64>,
    pub trace: ActivationTrace,
}

impl ForwardOutput {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn relu_in_place(z: &mut [f64]) {
    for v in z.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn apply_dropout(h: &mut [f64], rate: f64, rng: &mut StreamRng) {
    if rate <= 0.0 {
        return;
    }
    let scale = 1.0 / (1.0 - rate);
    for v in h.iter_mut() {
        if rng.gen::<f64>() < rate {
            *v = 0.0;
        } else {
            *v *= scale;
        }
    }
}

/// Dense feed-forward classifier: ReLU hidden layers, softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
}

/// Intermediate values kept for backpropagation.
struct Tape {
    /// Input vector of each layer.
    inputs: Vec<Vec<f64>>,
    /// d(layer output)/d(pre-activation) of each hidden layer, dropout included.
    gates: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl MlpModel {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::InvalidModel("no layers".into()));
        };
        if last.activation != Activation::Softmax {
            return Err(Error::InvalidModel("final activation must be softmax".into()));
        }
        if last.dropout != 0.0 {
            return Err(Error::InvalidModel("output layer cannot carry dropout".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].activation != Activation::Relu {
                return Err(Error::InvalidModel(format!("hidden layer {i} must be relu")));
            }
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::InvalidModel(format!(
                    "layer {i} emits {} values but layer {} takes {}",
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn hidden_layers(&self) -> &[DenseLayer] {
        &self.layers[..self.layers.len() - 1]
    }

    /// Total hidden neuron count, the length of every activation trace.
    pub fn hidden_neurons(&self) -> usize {
        self.hidden_layers().iter().map(|l| l.outputs).sum()
    }

    pub fn has_dropout(&self) -> bool {
        self.hidden_layers().iter().any(|l| l.dropout > 0.0)
    }

    fn check_input(&self, image: &ImageTensor) -> Result<()> {
        if image.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: image.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, image: &ImageTensor, dropout: Option<DropoutSpec>) -> Result<ForwardOutput> {
        self.check_input(image)?;
        if let Some(DropoutSpec { rate: Some(r), .. }) = dropout {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidArgument(format!("dropout rate {r} outside [0, 1)")));
            }
        }
        let mut rng = dropout.map(|d| StreamRng::seed_from_u64(d.seed));
        let mut values = Vec::with_capacity(self.hidden_neurons());
        let mut offsets = vec![0];
        let mut x = image.data().to_vec();
        let mut z = Vec::new();
        for layer in &self.layers {
            layer.affine(&x, &mut z);
            match layer.activation {
                Activation::Relu => {
                    relu_in_place(&mut z);
                    values.extend_from_slice(&z);
                    offsets.push(values.len());
                    if let (Some(rng), Some(d)) = (rng.as_mut(), dropout) {
                        apply_dropout(&mut z, d.rate.unwrap_or(layer.dropout), rng);
                    }
                }
                Activation::Softmax => softmax_in_place(&mut z),
            }
            core::mem::swap(&mut x, &mut z);
        }
        Ok(ForwardOutput {
            probs: x,
            trace: ActivationTrace {
                values,
                layer_offsets: offsets,
            },
        })
    }

    /// Deterministic class prediction (dropout off, ties to lowest index).
    pub fn predict(&self, image: &ImageTensor) -> Result<usize> {
        Ok(self.forward(image, None)?.predicted())
    }

    /// Mean softmax over `n_samples` dropout passes. Sample `s` uses dropout
    /// seed `derive_seed(seed, &[s])`, so the result equals averaging
    /// [`MlpModel::forward`] calls with those seeds.
    pub fn mc_mean_probs(&self, image: &ImageTensor, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
        self.check_input(image)?;
        if n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
        }
        let first = &self.layers[0];
        let mut head = Vec::new();
        first.affine(image.data(), &mut head);
        if first.activation == Activation::Softmax {
            softmax_in_place(&mut head);
            return Ok(head);
        }
        relu_in_place(&mut head);
        if !self.has_dropout() {
            return Ok(self.run_tail(head, None));
        }
        // The first affine map does not depend on the dropout mask.
        let mut sum = vec![0.0; self.num_classes()];
        for s in 0..n_samples {
            let mut rng = StreamRng::seed_from_u64(derive_seed(seed, &[s as u64]));
            let probs = self.run_tail(head.clone(), Some(&mut rng));
            for (acc, p) in sum.iter_mut().zip(&probs) {
                *acc += p;
            }
        }
        for v in &mut sum {
            *v /= n_samples as f64;
        }
        Ok(sum)
    }

    /// Continues a pass from the first hidden layer's post-ReLU output.
    fn run_tail(&self, mut x: Vec<f64>, mut rng: Option<&mut StreamRng>) -> Vec<f64> {
        if let Some(rng) = rng.as_deref_mut() {
            apply_dropout(&mut x, self.layers[0].dropout, rng);
        }
        let mut z = Vec::new();
        for layer in &self.layers[1..] {
            layer.affine(&x, &mut z);
            match layer.activation {
                Activation::Relu => {
                    relu_in_place(&mut z);
                    if let Some(rng) = rng.as_deref_mut() {
                        apply_dropout(&mut z, layer.dropout, rng);
                    }
                }
                Activation::Softmax => softmax_in_place(&mut z),
            }
            core::mem::swap(&mut x, &mut z);
        }
        x
    }

    /// MC-dropout certainty: the largest component of the mean softmax.
    pub fn certainty(&self, image: &ImageTensor, n_samples: usize, seed: u64) -> Result<f64> {
        let mean = self.mc_mean_probs(image, n_samples, seed)?;
        Ok(mean.iter().copied().fold(0.0, f64::max))
    }

    fn tape(&self, x: &[f64], mut rng: Option<&mut StreamRng>) -> Tape {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut gates = Vec::with_capacity(self.layers.len() - 1);
        let mut x = x.to_vec();
        let mut probs = Vec::new();
        for layer in &self.layers {
            let mut z = Vec::new();
            layer.affine(&x, &mut z);
            inputs.push(x);
            match layer.activation {
                Activation::Relu => {
                    let scale = 1.0 / (1.0 - layer.dropout);
                    let mut gate = Vec::with_capacity(z.len());
                    for v in z.iter_mut() {
                        let mut g = if *v > 0.0 { 1.0 } else { 0.0 };
                        if let Some(rng) = rng.as_deref_mut() {
                            if layer.dropout > 0.0 {
                                g = if rng.gen::<f64>() < layer.dropout { 0.0 } else { g * scale };
                            }
                        }
                        *v = if *v > 0.0 { *v * g } else { 0.0 };
                        gate.push(g);
                    }
                    gates.push(gate);
                    x = z;
                }
                Activation::Softmax => {
                    softmax_in_place(&mut z);
                    probs = z;
                    x = Vec::new();
                }
            }
        }
        Tape { inputs, gates, probs }
    }

    /// Cross-entropy deltas (dL/dz) of every layer plus dL/dx.
    fn backprop(&self, tape: &Tape, label: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.layers.len();
        let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut delta = tape.probs.clone();
        delta[label] -= 1.0;
        let mut upstream = Vec::new();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            upstream.clear();
            upstream.resize(layer.inputs, 0.0);
            for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                if *d != 0.0 {
                    for (u, w) in upstream.iter_mut().zip(row) {
                        *u += w * d;
                    }
                }
            }
            deltas[l] = core::mem::take(&mut delta);
            if l > 0 {
                delta = upstream
                    .iter()
                    .zip(&tape.gates[l - 1])
                    .map(|(u, g)| u * g)
                    .collect();
            }
        }
        (deltas, upstream)
    }

    pub fn loss(&self, image: &ImageTensor, label: usize) -> Result<f64> {
        let probs = self.forward(image, None)?.probs;
        let p = probs.get(label).copied().ok_or_else(|| {
            Error::InvalidArgument(format!("label {label} not below {}", self.num_classes()))
        })?;
        Ok(-libm::log(p.max(f64::MIN_POSITIVE)))
    }

    /// Gradient of the cross-entropy loss with respect to the flattened
    /// input, dropout off.
    pub fn input_gradient(&self, image: &ImageTensor, label: usize) -> Result<Vec<f64>> {
        self.check_input(image)?;
        if label >= self.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "label {label} not below {}",
                self.num_classes()
            )));
        }
        let tape = self.tape(image.data(), None);
        Ok(self.backprop(&tape, label).1)
    }

    fn sgd_step(&mut self, x: &[f64], label: usize, lr: f64, rng: &mut StreamRng) {
        let tape = self.tape(x, Some(rng));
        let (deltas, _) = self.backprop(&tape, label);
        for ((layer, delta), input) in self.layers.iter_mut().zip(&deltas).zip(&tape.inputs) {
            for ((row, d), b) in layer
                .weights
                .chunks_exact_mut(layer.inputs)
                .zip(delta)
                .zip(layer.bias.iter_mut())
            {
                if *d == 0.0 {
                    continue;
                }
                for (w, v) in row.iter_mut().zip(input) {
                    *w -= lr * d * v;
                }
                *b -= lr * d;
            }
        }
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut correct = 0usize;
        for (im, &label) in data.images().iter().zip(data.labels()) {
            if self.predict(im)? == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

/// Fast gradient sign perturbation: `clamp(x + ε·sign(∇ₓ L), 0, 1)`.
pub fn fgsm(model: &MlpModel, image: &ImageTensor, label: usize, epsilon: f64) -> Result<ImageTensor> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be finite and >= 0")));
    }
    let grad = model.input_gradient(image, label)?;
    let data = image
        .data()
        .iter()
        .zip(&grad)
        .map(|(x, g)| {
            let step = if *g > 0.0 {
                epsilon
            } else if *g < 0.0 {
                -epsilon
            } else {
                0.0
            };
            clamp_unit(x + step)
        })
        .collect();
    let (h, w, c) = image.dims();
    Ok(ImageTensor::from_clamped(h, w, c, data))
}

/// Hidden layer widths and per-hidden-layer dropout rates for [`train_toy`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub hidden: Vec<usize>,
    pub dropout: Vec<f64>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            dropout: vec![0.25, 0.25],
        }
    }
}

/// Trains a fresh model with per-sample SGD on cross-entropy loss.
/// Glorot-uniform initialisation; deterministic for a given seed.
pub fn train_toy(
    spec: &TrainSpec,
    data: &LabeledDataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<MlpModel> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::InvalidArgument(format!("learning rate {lr} must be positive")));
    }
    if spec.hidden.len() != spec.dropout.len() {
        return Err(Error::LengthMismatch(spec.hidden.len(), spec.dropout.len()));
    }
    let input_dim = data.image(0).len();
    let mut widths = vec![input_dim];
    widths.extend_from_slice(&spec.hidden);
    widths.push(data.num_classes());

    let mut init = stream(seed, &[0]);
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for (l, pair) in widths.windows(2).enumerate() {
        let (inputs, outputs) = (pair[0], pair[1]);
        let limit = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let weights = (0..inputs * outputs)
            .map(|_| init.gen_range(-limit..limit))
            .collect();
        let last = l + 2 == widths.len();
        let (activation, dropout) = if last {
            (Activation::Softmax, 0.0)
        } else {
            (Activation::Relu, spec.dropout[l])
        };
        layers.push(DenseLayer::new(
            outputs,
            inputs,
            weights,
            vec![0.0; outputs],
            activation,
            dropout,
        )?);
    }
    let mut model = MlpModel::new(layers)?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs as u64 {
        order.shuffle(&mut stream(seed, &[1, epoch]));
        let mut drop_rng = stream(seed, &[2, epoch]);
        for &i in &order {
            model.sgd_step(data.image(i).data(), data.label(i), lr, &mut drop_rng);
        }
    }
    Ok(model)
}
