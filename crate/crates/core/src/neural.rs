//! Small dense feed-forward networks with exact reverse-mode gradients.
//!
//! Policies use one 20-unit ReLU hidden layer and a softmax head split into
//! one group per owned knob; the centralized critic uses three 20-unit tanh
//! layers and a linear scalar head.

use rand::Rng;

use crate::error::{invalid, Error, Result};

pub const HIDDEN_UNITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and the output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Output head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Head {
    Linear,
    /// Contiguous groups, each normalized independently. Sizes must sum to
    /// the output width.
    SoftmaxGroups(Vec<usize>),
}

/// Affine map `z = W a + b` with `W` stored row-major (`n_out x n_in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weights: vec![0.0; n_in * n_out], biases: vec![0.0; n_out] }
    }

    fn apply(&self, a: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.n_in)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
    hidden: Activation,
    head: Head,
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self { layers: net.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect() }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += scale * y;
            }
        }
    }

    /// Flattened in the same order as [`DenseNet::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|&g| g == 0.0)
    }
}

impl DenseNet {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], hidden: Activation, head: Head, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes, hidden, head)?;
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, head: Head) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return invalid(format!("layer sizes {sizes:?} must have >= 2 non-zero entries"));
        }
        let out = *sizes.last().expect("non-empty");
        if let Head::SoftmaxGroups(groups) = &head {
            if groups.contains(&0) || groups.iter().sum::<usize>() != out {
                return invalid(format!("softmax groups {groups:?} do not partition {out} outputs"));
            }
        }
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self { layers, hidden, head })
    }

    /// Policy shape: one 20-unit ReLU layer, softmax head per group.
    pub fn policy(n_in: usize, groups: Vec<usize>, rng: &mut impl Rng) -> Result<Self> {
        let out = groups.iter().sum();
        Self::new(&[n_in, HIDDEN_UNITS, out], Activation::Relu, Head::SoftmaxGroups(groups), rng)
    }

    /// Critic shape: three 20-unit tanh layers, linear scalar head.
    pub fn critic(n_in: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::new(
            &[n_in, HIDDEN_UNITS, HIDDEN_UNITS, HIDDEN_UNITS, 1],
            Activation::Tanh,
            Head::Linear,
            rng,
        )
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("at least one layer").n_out
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_len()).chain(self.layers.iter().map(|l| l.n_out)).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::ShapeMismatch { expected: self.num_params(), actual: flat.len() });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::ShapeMismatch { expected: self.input_len(), actual: x.len() });
        }
        Ok(())
    }

    /// Pre-activations and activations of every layer; the last
    /// pre-activation is the head input.
    fn trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(post.last().expect("non-empty"));
            if i < last {
                post.push(z.iter().map(|&v| self.hidden.apply(v)).collect());
            }
            pre.push(z);
        }
        (pre, post)
    }

    fn apply_head(&self, z: &[f64]) -> Vec<f64> {
        match &self.head {
            Head::Linear => z.to_vec(),
            Head::SoftmaxGroups(groups) => {
                let mut out = Vec::with_capacity(z.len());
                let mut start = 0;
                for &g in groups {
                    out.extend(softmax(&z[start..start + g]));
                    start += g;
                }
                out
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let (pre, _) = self.trace(x);
        Ok(self.apply_head(pre.last().expect("non-empty")))
    }

    /// Gradient of `upstream . forward(x)` with respect to every parameter,
    /// where `upstream` is dLoss/dOutput.
    pub fn grad(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        self.check_input(x)?;
        if upstream.len() != self.output_len() {
            return Err(Error::ShapeMismatch { expected: self.output_len(), actual: upstream.len() });
        }
        let (pre, post) = self.trace(x);
        let logits = pre.last().expect("non-empty");

        let mut delta: Vec<f64> = match &self.head {
            Head::Linear => upstream.to_vec(),
            Head::SoftmaxGroups(groups) => {
                let probs = self.apply_head(logits);
                let mut d = vec![0.0; probs.len()];
                let mut start = 0;
                for &g in groups {
                    let range = start..start + g;
                    let dot: f64 = probs[range.clone()].iter().zip(&upstream[range.clone()]).map(|(p, u)| p * u).sum();
                    for i in range {
                        d[i] = probs[i] * (upstream[i] - dot);
                    }
                    start += g;
                }
                d
            }
        };

        let mut grads = Gradients::zeros_like(self);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &post[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                g.biases[o] = d;
                let row = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (w, &a) in row.iter_mut().zip(input) {
                    *w = d * a;
                }
            }
            if l == 0 {
                break;
            }
            let mut below = vec![0.0; layer.n_in];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (b, &w) in below.iter_mut().zip(row) {
                    *b += w * d;
                }
            }
            for ((b, &z), &a) in below.iter_mut().zip(&pre[l - 1]).zip(&post[l]) {
                *b *= self.hidden.derivative(z, a);
            }
            delta = below;
        }
        Ok(grads)
    }

    /// `theta <- theta - lr * grad`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, dw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= lr * dw;
            }
            for (b, db) in layer.biases.iter_mut().zip(&g.biases) {
                *b -= lr * db;
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Draws index `i` with probability `probs[i]`.
pub fn categorical_sample(probs: &[f64], rng: &mut impl Rng) -> Result<usize> {
    if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return invalid("probabilities must be non-empty, finite and non-negative");
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return invalid(format!("probabilities sum to {total}, not 1"));
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}
