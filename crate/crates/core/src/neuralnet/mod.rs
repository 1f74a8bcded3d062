//! Dense feedforward network with hand-written backpropagation.
//!
//! The same network family backs both the Q-network (two linear outputs, one
//! per action) and the supervised baseline (one logit). Hidden layers use ReLU
//! and the output layer is the identity; any output squashing is the caller's
//! business.
//!
//! Weights are stored `[out × in]`, so a batch `X` of shape `[B × in]` maps to
//! `X · Wᵀ + b`. Every loss in [`loss`] returns the gradient of a *mean* over
//! its inputs, which is what [`Mlp::backward`] expects as `output_grad`.

mod adam;
mod checkpoint;
pub mod loss;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, Head, CHECKPOINT_FORMAT_VERSION};
pub use loss::{bce_with_logits, huber_loss, sigmoid, DEFAULT_HUBER_DELTA};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
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

/// Weights `[out × in]` and biases `[out]` of one affine layer.
///
/// Also used for anything shaped like the parameters: gradients and Adam
/// moments.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl LayerParams {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            biases: Array1::zeros(outputs),
        }
    }

    fn zeros_like(other: &LayerParams) -> Self {
        Self {
            weights: Array2::zeros(other.weights.raw_dim()),
            biases: Array1::zeros(other.biases.raw_dim()),
        }
    }

    fn same_shape(&self, other: &LayerParams) -> bool {
        self.weights.dim() == other.weights.dim() && self.biases.dim() == other.biases.dim()
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().chain(self.biases.iter()).all(|v| v.is_finite())
    }
}

/// Per-parameter partial derivatives, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    /// Row-major weights then biases, layer by layer; same order as [`Mlp::params_flat`].
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(LayerParams::all_finite)
    }
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layer_sizes: Vec<usize>,
    /// Input to each layer: the batch itself, then each hidden activation.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    hidden_pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<LayerParams>,
}

impl Mlp {
    /// Uniform ±sqrt(6 / (fan_in + fan_out)) weights, zero biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        validate_layer_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit)
                    .map_err(|e| Error::InvalidConfig(format!("weight init range: {e}")))?;
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(&mut rng));
                Ok(LayerParams {
                    weights,
                    biases: Array1::zeros(fan_out),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation: Activation::Relu,
            layers,
        })
    }

    /// Builds a network from explicit parameters, checking every shape.
    pub fn from_layers(layers: Vec<LayerParams>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::InvalidConfig("a network needs at least one layer".into()));
        };
        let mut layer_sizes = vec![first.weights.ncols()];
        for (i, layer) in layers.iter().enumerate() {
            let (out, inp) = layer.weights.dim();
            if inp != *layer_sizes.last().unwrap() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {inp} inputs but previous layer has {} outputs",
                    layer_sizes.last().unwrap()
                )));
            }
            if layer.biases.len() != out {
                return Err(Error::Shape(format!(
                    "layer {i} has {out} outputs but {} biases",
                    layer.biases.len()
                )));
            }
            if !layer.all_finite() {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
            layer_sizes.push(out);
        }
        validate_layer_sizes(&layer_sizes)?;
        Ok(Self {
            layer_sizes,
            activation: Activation::Relu,
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Direct parameter access. Callers must keep shapes unchanged.
    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
        Ok(())
    }

    /// Overwrites this network's parameters with `other`'s. Used for target sync.
    pub fn copy_params_from(&mut self, other: &Mlp) -> Result<()> {
        if self.layer_sizes != other.layer_sizes {
            return Err(Error::Shape(format!(
                "cannot copy {:?} into {:?}",
                other.layer_sizes, self.layer_sizes
            )));
        }
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.assign(&src.weights);
            dst.biases.assign(&src.biases);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(LayerParams::all_finite)
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.input_size() {
            return Err(Error::Shape(format!(
                "batch width {width} does not match network input size {}",
                self.input_size()
            )));
        }
        Ok(())
    }

    /// Forward pass keeping what backward needs.
    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_width(batch.ncols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut hidden_pre = Vec::with_capacity(last);
        let mut current = batch.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(current.view(), layer);
            inputs.push(current);
            if i == last {
                let cache = ForwardCache {
                    layer_sizes: self.layer_sizes.clone(),
                    inputs,
                    hidden_pre,
                };
                return Ok((z, cache));
            }
            let act = self.activation;
            current = z.mapv(|v| act.apply(v));
            hidden_pre.push(z);
        }
        unreachable!("network has at least one layer")
    }

    /// Forward pass without a cache.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(batch.ncols())?;
        let last = self.layers.len() - 1;
        let mut current = batch.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(current.view(), layer);
            if i != last {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            current = z;
        }
        Ok(current)
    }

    /// Single-sample forward pass.
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_width(input.len())?;
        let last = self.layers.len() - 1;
        let mut current = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next: Vec<f64> = layer
                .weights
                .outer_iter()
                .zip(layer.biases.iter())
                .map(|(row, b)| row.iter().zip(&current).map(|(w, x)| w * x).sum::<f64>() + b)
                .collect();
            if i != last {
                for v in &mut next {
                    *v = self.activation.apply(*v);
                }
            }
            current = next;
        }
        Ok(current)
    }

    /// Exact gradients of a scalar loss given dLoss/dOutput for the cached batch.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<Gradients> {
        if cache.layer_sizes != self.layer_sizes || cache.inputs.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "forward cache was produced by a {:?} network, not {:?}",
                cache.layer_sizes, self.layer_sizes
            )));
        }
        let expected = (cache.batch_size(), self.output_size());
        if output_grad.dim() != expected {
            return Err(Error::Shape(format!(
                "output gradient is {:?}, expected {:?}",
                output_grad.dim(),
                expected
            )));
        }
        let mut grads: Vec<LayerParams> = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.to_owned();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            let weights = delta.t().dot(input);
            let biases = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream = delta.dot(&self.layers[i].weights);
                let act = self.activation;
                Zip::from(&mut upstream)
                    .and(&cache.hidden_pre[i - 1])
                    .for_each(|d, &z| *d *= act.derivative(z));
                delta = upstream;
            }
            grads.push(LayerParams { weights, biases });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

fn affine(input: ArrayView2<f64>, layer: &LayerParams) -> Array2<f64> {
    let mut z = input.dot(&layer.weights.t());
    z += &layer.biases;
    z
}

fn validate_layer_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "layer_sizes needs an input and an output size, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

fn flatten_layers(layers: &[LayerParams]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
        .collect()
}
