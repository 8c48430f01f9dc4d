//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! A [`Network`] is an ordered list of [`DenseLayer`]s. Each layer reads either the
//! data batch or the output of an earlier layer, so besides plain chains the
//! network can express a shared trunk feeding several heads. Layers that no other
//! layer consumes are the network outputs, concatenated in layer order.
//!
//! Layers are grouped into named components (encoder, decoder, heads, ...) given
//! as contiguous layer ranges that partition the layer list.

mod gradcheck;
mod loss;
mod optim;

pub use gradcheck::{fd_gradient, fd_gradient_with, FD_STEP};
pub use loss::mse_loss;
pub use optim::{Adam, Optimizer, Sgd};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + libm::exp(-z)),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Matrix { rows: usize, cols: usize },
    Vector(usize),
}

impl Shape {
    pub fn numel(self) -> usize {
        match self {
            Shape::Matrix { rows, cols } => rows * cols,
            Shape::Vector(len) => len,
        }
    }
}

/// A named weight or bias array together with its last computed gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    shape: Shape,
    values: Vec<f64>,
    grad: Vec<f64>,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, shape: Shape, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.len() != shape.numel() {
            return Err(Error::Config(format!(
                "{name}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: name });
        }
        let grad = vec![0.0; values.len()];
        Ok(Self { name, shape, values, grad })
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    #[inline]
    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Replaces shape and values together; gradient is reset to zeros.
    pub fn replace(&mut self, shape: Shape, values: Vec<f64>) -> Result<()> {
        *self = ParamTensor::new(core::mem::take(&mut self.name), shape, values)?;
        Ok(())
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

/// Where a layer takes its input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LayerInput {
    Data,
    Layer(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ParamRole {
    Weight,
    Bias,
}

/// Identifies one whole parameter tensor of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorRef {
    pub layer: usize,
    pub role: ParamRole,
}

/// A single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamIndex {
    pub tensor: TensorRef,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`, row-major.
    pub weight: ParamTensor,
    pub bias: ParamTensor,
    pub activation: Activation,
    pub input: LayerInput,
}

impl DenseLayer {
    pub fn new(
        name: &str,
        weight: Matrix,
        bias: Vec<f64>,
        activation: Activation,
        input: LayerInput,
    ) -> Result<Self> {
        let (rows, cols) = (weight.rows(), weight.cols());
        let weight = ParamTensor::new(
            format!("{name}.weight"),
            Shape::Matrix { rows, cols },
            weight.into_vec(),
        )?;
        let bias = ParamTensor::new(format!("{name}.bias"), Shape::Vector(bias.len()), bias)?;
        let layer = Self { weight, bias, activation, input };
        if layer.bias.len() != rows {
            return Err(Error::Config(format!(
                "{name}: bias length {} does not match {rows} weight rows",
                layer.bias.len()
            )));
        }
        Ok(layer)
    }

    /// Output units (weight rows).
    pub fn out_dim(&self) -> usize {
        match self.weight.shape() {
            Shape::Matrix { rows, .. } => rows,
            Shape::Vector(len) => len,
        }
    }

    /// Input width (weight columns).
    pub fn in_dim(&self) -> usize {
        match self.weight.shape() {
            Shape::Matrix { cols, .. } => cols,
            Shape::Vector(_) => 1,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn tensor(&self, role: ParamRole) -> &ParamTensor {
        match role {
            ParamRole::Weight => &self.weight,
            ParamRole::Bias => &self.bias,
        }
    }

    pub fn tensor_mut(&mut self, role: ParamRole) -> &mut ParamTensor {
        match role {
            ParamRole::Weight => &mut self.weight,
            ParamRole::Bias => &mut self.bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Component {
    pub name: String,
    pub layers: Range<usize>,
}

impl Component {
    pub fn new(name: impl Into<String>, layers: Range<usize>) -> Self {
        Self { name: name.into(), layers }
    }
}

/// Width and activation of one layer, used to build seeded networks.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub input: LayerInput,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize, activation: Activation, input: LayerInput) -> Self {
        Self { name: name.into(), in_dim, out_dim, activation, input }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
    components: Vec<Component>,
}

/// Per-layer outputs recorded by [`Network::forward`], consumed by [`Network::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: Matrix,
    /// Post-activation output of every layer, in layer order.
    pub layer_outputs: Vec<Matrix>,
    /// Concatenated outputs of the sink layers.
    pub output: Matrix,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>, components: Vec<Component>) -> Result<Self> {
        let net = Self { layers, components };
        net.check_topology()?;
        Ok(net)
    }

    /// Builds a network with weights and biases drawn uniformly from
    /// `±1/sqrt(fan_in)` using a ChaCha8 stream seeded with `seed`.
    pub fn seeded(specs: &[LayerSpec], components: Vec<Component>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            if spec.in_dim == 0 || spec.out_dim == 0 {
                return Err(Error::Config(format!("{}: zero-width layer", spec.name)));
            }
            let bound = 1.0 / libm::sqrt(spec.in_dim as f64);
            let mut draw = || rng.gen_range(-bound..bound);
            let w: Vec<f64> = (0..spec.in_dim * spec.out_dim).map(|_| draw()).collect();
            let b: Vec<f64> = (0..spec.out_dim).map(|_| draw()).collect();
            layers.push(DenseLayer::new(
                &spec.name,
                Matrix::from_vec(spec.out_dim, spec.in_dim, w)?,
                b,
                spec.activation,
                spec.input,
            )?);
        }
        Self::new(layers, components)
    }

    /// Checks shape chaining and the component partition.
    pub fn check_topology(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        let mut data_width = None;
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Config(format!(
                    "layer {k}: bias length {} != weight rows {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if layer.out_dim() == 0 || layer.in_dim() == 0 {
                return Err(Error::Config(format!("layer {k}: empty layer")));
            }
            let expected = match layer.input {
                LayerInput::Data => *data_width.get_or_insert(layer.in_dim()),
                LayerInput::Layer(src) if src < k => self.layers[src].out_dim(),
                LayerInput::Layer(src) => {
                    return Err(Error::Config(format!(
                        "layer {k} reads layer {src}, which does not precede it"
                    )))
                }
            };
            if layer.in_dim() != expected {
                return Err(Error::Config(format!(
                    "layer {k}: input width {} does not match upstream width {expected}",
                    layer.in_dim()
                )));
            }
        }
        if data_width.is_none() {
            return Err(Error::Config("no layer reads the data batch".into()));
        }
        let mut next = 0;
        for c in &self.components {
            if c.layers.is_empty() {
                return Err(Error::EmptyComponent(c.name.clone()));
            }
            if c.layers.start != next {
                return Err(Error::Config(format!(
                    "component `{}` starts at layer {}, expected {next}",
                    c.name, c.layers.start
                )));
            }
            next = c.layers.end;
        }
        if next != self.layers.len() {
            return Err(Error::Config(format!(
                "components cover {next} of {} layers",
                self.layers.len()
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Direct mutable access. Callers that reshape tensors should re-run
    /// [`Network::check_topology`].
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component_of(&self, layer: usize) -> Option<&Component> {
        self.components.iter().find(|c| c.layers.contains(&layer))
    }

    pub fn input_dim(&self) -> usize {
        self.layers
            .iter()
            .find(|l| l.input == LayerInput::Data)
            .map_or(0, DenseLayer::in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.sinks().iter().map(|&k| self.layers[k].out_dim()).sum()
    }

    /// Layers that read the output of `layer`.
    pub fn consumers(&self, layer: usize) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.input == LayerInput::Layer(layer))
            .map(|(k, _)| k)
            .collect()
    }

    /// Layers whose output is not consumed by any other layer.
    pub fn sinks(&self) -> Vec<usize> {
        let mut consumed = vec![false; self.layers.len()];
        for l in &self.layers {
            if let LayerInput::Layer(src) = l.input {
                consumed[src] = true;
            }
        }
        (0..self.layers.len()).filter(|&k| !consumed[k]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn tensor(&self, r: TensorRef) -> &ParamTensor {
        self.layers[r.layer].tensor(r.role)
    }

    pub fn tensor_mut(&mut self, r: TensorRef) -> &mut ParamTensor {
        self.layers[r.layer].tensor_mut(r.role)
    }

    /// All tensors in a fixed order: weight then bias, layer by layer.
    pub fn tensor_refs(&self) -> Vec<TensorRef> {
        (0..self.layers.len())
            .flat_map(|layer| {
                [ParamRole::Weight, ParamRole::Bias].map(|role| TensorRef { layer, role })
            })
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.weight.zero_grad();
            l.bias.zero_grad();
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.values().iter().chain(l.bias.values()).all(|v| v.is_finite())
                && l.weight.grad().iter().chain(l.bias.grad()).all(|v| v.is_finite())
        })
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardCache> {
        if batch.rows() == 0 {
            return Err(Error::Config("empty batch".into()));
        }
        if batch.cols() != self.input_dim() {
            return Err(Error::Config(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let mut outputs: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let x = match layer.input {
                LayerInput::Data => batch,
                LayerInput::Layer(src) => &outputs[src],
            };
            if x.cols() != layer.in_dim() || layer.bias.len() != layer.out_dim() {
                return Err(Error::Config(format!("layer {k}: shape mismatch")));
            }
            let mut z = matrix::affine(x, layer.weight.values(), layer.bias.values(), layer.out_dim());
            let act = layer.activation;
            z.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            if !z.is_finite() {
                return Err(Error::NonFinite { context: format!("layer {k} activations") });
            }
            outputs.push(z);
        }
        let sinks = self.sinks();
        let parts: Vec<&Matrix> = sinks.iter().map(|&k| &outputs[k]).collect();
        let output = if parts.len() == 1 { parts[0].clone() } else { Matrix::hcat(&parts)? };
        Ok(ForwardCache { input: batch.clone(), layer_outputs: outputs, output })
    }

    /// Fills every tensor's gradient with dLoss/dθ given dLoss/dOutput.
    /// Gradients are overwritten, not accumulated.
    pub fn backward(&mut self, cache: &ForwardCache, d_out: &Matrix) -> Result<()> {
        let n = self.layers.len();
        if cache.layer_outputs.len() != n
            || cache
                .layer_outputs
                .iter()
                .zip(&self.layers)
                .any(|(a, l)| a.cols() != l.out_dim() || a.rows() != cache.input.rows())
        {
            return Err(Error::MissingCache);
        }
        if d_out.rows() != cache.output.rows() || d_out.cols() != cache.output.cols() {
            return Err(Error::Config(format!(
                "output gradient is {}x{}, output is {}x{}",
                d_out.rows(),
                d_out.cols(),
                cache.output.rows(),
                cache.output.cols()
            )));
        }
        let batch = cache.input.rows();
        let mut d_act: Vec<Option<Matrix>> = vec![None; n];
        let mut off = 0;
        for k in self.sinks() {
            let w = self.layers[k].out_dim();
            d_act[k] = Some(d_out.col_block(off, w));
            off += w;
        }
        for k in (0..n).rev() {
            let layer = &mut self.layers[k];
            let mut dz = d_act[k].take().unwrap_or_else(|| Matrix::zeros(batch, layer.out_dim()));
            let act = layer.activation;
            for (d, &a) in dz.as_mut_slice().iter_mut().zip(cache.layer_outputs[k].as_slice()) {
                *d *= act.derivative_from_output(a);
            }
            let x = match layer.input {
                LayerInput::Data => &cache.input,
                LayerInput::Layer(src) => &cache.layer_outputs[src],
            };
            matrix::weight_grads(&dz, x, &mut layer.weight.grad, &mut layer.bias.grad);
            if let LayerInput::Layer(src) = layer.input {
                let in_dim = layer.in_dim();
                let dx = d_act[src].get_or_insert_with(|| Matrix::zeros(batch, in_dim));
                matrix::input_grads_into(&dz, layer.weight.values(), dx);
            }
        }
        if !self.all_finite() {
            return Err(Error::NonFinite { context: "gradients".into() });
        }
        Ok(())
    }
}

/// Adds `coeff * sign(θ)` to the gradient of every listed tensor, with `sign(0) = 0`.
/// `coeff` is the product of the global penalty weight and the group coefficient.
pub fn l1_subgradient(net: &mut Network, tensors: &[TensorRef], coeff: f64) {
    if coeff == 0.0 {
        return;
    }
    for &r in tensors {
        let t = net.tensor_mut(r);
        let ParamTensor { values, grad, .. } = t;
        for (g, &v) in grad.iter_mut().zip(values.iter()) {
            if v > 0.0 {
                *g += coeff;
            } else if v < 0.0 {
                *g -= coeff;
            }
        }
    }
}
