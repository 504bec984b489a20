//! Dense layer stacks with exact backward passes.
//!
//! A layer computes `y = act(x · W + b)` where `W` has shape `(in, out)`. A
//! [`DenseStack`] chains layers; `forward` returns a [`ForwardCache`] holding
//! every intermediate activation so `backward` can reproduce the exact
//! gradients without recomputation.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zeros,
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    GlorotUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    weight: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::dims("layer bias", weight.cols(), bias.len()));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("non-finite bias".into()));
        }
        Ok(DenseLayer {
            weight,
            bias,
            activation,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let mut weight = Matrix::zeros(input_dim, output_dim);
        if let Init::GlorotUniform = init {
            let limit = (6.0 / (input_dim + output_dim) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot limit");
            for w in weight.as_mut_slice() {
                *w = dist.sample(rng);
            }
        }
        DenseLayer {
            weight,
            bias: vec![0.0; output_dim],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Activation trace of one forward call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[i + 1]` the output of layer `i`.
    activations: Vec<Matrix>,
    version: u64,
    shapes: Vec<(usize, usize)>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients for every parameter of a [`DenseStack`], shaped like the stack.
#[derive(Debug, Clone, PartialEq)]
pub struct StackGradients {
    pub layers: Vec<LayerGradients>,
}

impl StackGradients {
    pub fn zeros_like(stack: &DenseStack) -> Self {
        StackGradients {
            layers: stack
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weight: Matrix::zeros(l.input_dim(), l.output_dim()),
                    bias: vec![0.0; l.output_dim()],
                })
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for s in out.slices_mut() {
            for v in s.iter_mut() {
                *v *= factor;
            }
        }
        out
    }

    /// Elementwise `self + other`.
    pub fn plus(&self, other: &StackGradients) -> Self {
        let mut out = self.clone();
        for (dst, src) in out.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_all_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

/// A chain of dense layers.
///
/// Every parameter mutation bumps an internal version so that a cache from an
/// earlier forward pass is rejected by `backward`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseStack {
    layers: Vec<DenseLayer>,
    #[serde(default)]
    version: u64,
}

impl DenseStack {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("layer list"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::dims(
                    format!("layer {} input", i + 1),
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        Ok(DenseStack { layers, version: 0 })
    }

    /// Builds a stack from `input_dim` through each `(width, activation)`.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        spec: &[(usize, Activation)],
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || spec.iter().any(|&(w, _)| w == 0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        let mut layers = Vec::with_capacity(spec.len());
        let mut fan_in = input_dim;
        for &(width, act) in spec {
            layers.push(DenseLayer::init(fan_in, width, act, init, rng));
            fan_in = width;
        }
        DenseStack::from_layers(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Replaces one layer's parameters; shapes must match the existing layer.
    pub fn set_layer(&mut self, index: usize, weight: Matrix, bias: Vec<f64>) -> Result<()> {
        let layer = self
            .layers
            .get_mut(index)
            .ok_or_else(|| Error::InvalidArgument(format!("no layer {index}")))?;
        if weight.shape() != layer.weight.shape() {
            return Err(Error::dims(
                format!("layer {index} weight"),
                layer.weight.as_slice().len(),
                weight.as_slice().len(),
            ));
        }
        if bias.len() != layer.bias.len() {
            return Err(Error::dims(format!("layer {index} bias"), layer.bias.len(), bias.len()));
        }
        layer.weight = weight;
        layer.bias = bias;
        self.version += 1;
        Ok(())
    }

    /// Zeroes the weights and bias of the last layer.
    pub fn zero_last_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty stack");
        last.weight = Matrix::zeros(last.weight.rows(), last.weight.cols());
        last.bias.iter_mut().for_each(|b| *b = 0.0);
        self.version += 1;
    }

    pub fn parameter_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    /// Mutable access to every parameter tensor, in the same order as
    /// [`StackGradients::slices`]. Invalidates outstanding caches.
    pub fn parameter_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer_forward(layer, &activations[i], i)?;
            activations.push(next);
        }
        let output = activations.last().cloned().expect("non-empty");
        let cache = ForwardCache {
            activations,
            version: self.version,
            shapes: self.layers.iter().map(|l| l.weight.shape()).collect(),
        };
        Ok((output, cache))
    }

    /// Forward pass without keeping a cache.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        let mut current = layer_forward(&self.layers[0], input, 0)?;
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            current = layer_forward(layer, &current, i)?;
        }
        Ok(current)
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_gradient: &Matrix,
    ) -> Result<(StackGradients, Matrix)> {
        let shapes: Vec<_> = self.layers.iter().map(|l| l.weight.shape()).collect();
        if cache.shapes != shapes {
            return Err(Error::StaleCache("layer shapes differ from the stack".into()));
        }
        if cache.version != self.version {
            return Err(Error::StaleCache(format!(
                "cache from parameter version {}, stack is at {}",
                cache.version, self.version
            )));
        }
        let out = cache.output();
        if output_gradient.shape() != out.shape() {
            return Err(Error::dims(
                "output gradient",
                out.as_slice().len(),
                output_gradient.as_slice().len(),
            ));
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_gradient.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let layer_out = &cache.activations[i + 1];
            let layer_in = &cache.activations[i];
            if let Activation::Relu = layer.activation {
                for (g, &y) in upstream.as_mut_slice().iter_mut().zip(layer_out.as_slice()) {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let weight = layer_in.t_matmul(&upstream)?;
            let bias = upstream.column_sums();
            upstream = upstream.matmul_t(&layer.weight)?;
            grads.push(LayerGradients { weight, bias });
        }
        grads.reverse();
        Ok((StackGradients { layers: grads }, upstream))
    }
}

fn layer_forward(layer: &DenseLayer, input: &Matrix, index: usize) -> Result<Matrix> {
    if input.cols() != layer.input_dim() {
        return Err(Error::dims(
            format!("layer {index} input"),
            layer.input_dim(),
            input.cols(),
        ));
    }
    let mut out = input.matmul(&layer.weight)?;
    let cols = out.cols();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for (v, b) in row.iter_mut().zip(&layer.bias) {
            *v = layer.activation.apply(*v + b);
        }
        debug_assert_eq!(row.len(), cols);
    }
    Ok(out)
}
