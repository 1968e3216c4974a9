use alloc::format;
use alloc::vec::Vec;

use super::layer::LayerSpec;
use crate::math::sqrt;
use crate::rng::streams;
use crate::{Error, Result, Rng, Tensor};

/// Weight and bias of one layer. Dense weights are `[units, inputs]`,
/// conv weights `[filters, C·K·K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Params {
    fn zeros_like(other: &Self) -> Self {
        Self {
            weight: Tensor::zeros(other.weight.shape()),
            bias: Tensor::zeros(other.bias.shape()),
        }
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn squared_norm(&self) -> f64 {
        self.weight.data().iter().chain(self.bias.data()).map(|v| v * v).sum()
    }
}

/// Per-layer parameter gradients, `None` for layers without parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<Params>>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        sqrt(self.layers.iter().flatten().map(Params::squared_norm).sum())
    }

    /// All gradient values in layer order, weights before biases.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in self.layers.iter().flatten() {
            out.extend_from_slice(p.weight.data());
            out.extend_from_slice(p.bias.data());
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.flat()
            .iter()
            .zip(other.flat())
            .map(|(a, b)| crate::math::abs(a - b))
            .fold(0.0, f64::max)
    }
}

/// A layer stack with its parameters and momentum buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub(crate) input_shape: Vec<usize>,
    pub(crate) layers: Vec<LayerSpec>,
    /// `shapes[l]` is the per-example input shape of layer `l`; the last
    /// entry is the output shape.
    pub(crate) shapes: Vec<Vec<usize>>,
    pub(crate) params: Vec<Option<Params>>,
    pub(crate) velocity: Vec<Option<Params>>,
}

impl Model {
    /// Builds the layer stack and draws initial weights from
    /// `U(±sqrt(6/fan_in))`; biases start at zero. Each weight layer draws
    /// from a stream keyed by its ordinal among weight layers, so inserting
    /// or removing corruption layers leaves the initial weights unchanged.
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(input_shape, layers)?;
        let init = Rng::new(seed, streams::INIT);
        for (ordinal, p) in model.params.iter_mut().flatten().enumerate() {
            let bound = sqrt(6.0 / p.weight.shape()[1] as f64);
            let mut rng = init.derive(&[ordinal as u64]);
            for w in p.weight.data_mut() {
                *w = (2.0 * rng.uniform() - 1.0) * bound;
            }
        }
        Ok(model)
    }

    /// Same layer stack with every parameter zero.
    pub fn zeroed(input_shape: &[usize], layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.last() != Some(&LayerSpec::SoftmaxOutput) {
            return Err(Error::LayerShape {
                index: layers.len().saturating_sub(1),
                reason: "the last layer must be softmax_output".into(),
            });
        }
        if let Some(index) = layers[..layers.len() - 1]
            .iter()
            .position(|l| *l == LayerSpec::SoftmaxOutput)
        {
            return Err(Error::LayerShape {
                index,
                reason: "softmax_output may only appear last".into(),
            });
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::LayerShape {
                index: 0,
                reason: format!("invalid input shape {input_shape:?}"),
            });
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        let mut params = Vec::with_capacity(layers.len());
        shapes.push(input_shape.to_vec());
        for (index, layer) in layers.iter().enumerate() {
            let (out, p) = layer.output_shape(index, shapes.last().unwrap())?;
            params.push(p.map(|(w, b)| Params {
                weight: Tensor::zeros(&w),
                bias: Tensor::zeros(&b),
            }));
            shapes.push(out);
        }
        let velocity = params.iter().map(|p| p.as_ref().map(Params::zeros_like)).collect();
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            shapes,
            params,
            velocity,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Per-example output shape of layer `index`.
    pub fn output_shape(&self, index: usize) -> &[usize] {
        &self.shapes[index + 1]
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().unwrap()[0]
    }

    pub fn params(&self, index: usize) -> Option<&Params> {
        self.params.get(index)?.as_ref()
    }

    pub fn velocity(&self, index: usize) -> Option<&Params> {
        self.velocity.get(index)?.as_ref()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Params::len).sum()
    }

    /// Indices of layers carrying parameters.
    pub fn weight_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.params[i].is_some()).collect()
    }

    /// Indices of corruption layers, in ordinal order.
    pub fn corruption_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| matches!(self.layers[i], LayerSpec::Corruption(_)))
            .collect()
    }

    /// Replaces one layer's parameters; shapes must match.
    pub fn set_params(&mut self, index: usize, weight: Tensor, bias: Tensor) -> Result<()> {
        let Some(Some(p)) = self.params.get_mut(index) else {
            return Err(Error::LayerShape {
                index,
                reason: "layer has no parameters".into(),
            });
        };
        for (new, old) in [(&weight, &p.weight), (&bias, &p.bias)] {
            if new.shape() != old.shape() {
                return Err(Error::Dimension {
                    left: new.shape().to_vec(),
                    right: old.shape().to_vec(),
                });
            }
        }
        *p = Params { weight, bias };
        Ok(())
    }

    pub fn set_velocity(&mut self, index: usize, weight: Tensor, bias: Tensor) -> Result<()> {
        let Some(Some(v)) = self.velocity.get_mut(index) else {
            return Err(Error::LayerShape {
                index,
                reason: "layer has no parameters".into(),
            });
        };
        if weight.shape() != v.weight.shape() || bias.shape() != v.bias.shape() {
            return Err(Error::Dimension {
                left: weight.shape().to_vec(),
                right: v.weight.shape().to_vec(),
            });
        }
        *v = Params { weight, bias };
        Ok(())
    }

    /// Copy of the model with the corruption layers removed.
    pub fn without_corruption(&self) -> Self {
        let keep: Vec<usize> = (0..self.layers.len())
            .filter(|&i| !matches!(self.layers[i], LayerSpec::Corruption(_)))
            .collect();
        let layers = keep.iter().map(|&i| self.layers[i].clone()).collect();
        let mut out = Self::zeroed(&self.input_shape, layers).expect("removing corruption keeps shapes valid");
        for (new, &old) in keep.iter().enumerate() {
            out.params[new] = self.params[old].clone();
            out.velocity[new] = self.velocity[old].clone();
        }
        out
    }

    /// Parameter slot addressed by a flat index (weights before biases,
    /// layers in order): `(layer, is_bias, offset)`.
    pub(crate) fn locate(&self, mut flat: usize) -> Option<(usize, bool, usize)> {
        for (layer, p) in self.params.iter().enumerate() {
            let Some(p) = p else { continue };
            if flat < p.weight.len() {
                return Some((layer, false, flat));
            }
            flat -= p.weight.len();
            if flat < p.bias.len() {
                return Some((layer, true, flat));
            }
            flat -= p.bias.len();
        }
        None
    }

    pub(crate) fn param_value_mut(&mut self, layer: usize, is_bias: bool, offset: usize) -> &mut f64 {
        let p = self.params[layer].as_mut().unwrap();
        let t = if is_bias { &mut p.bias } else { &mut p.weight };
        &mut t.data_mut()[offset]
    }
}
