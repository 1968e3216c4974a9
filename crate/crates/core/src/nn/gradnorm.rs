use alloc::vec::Vec;

use super::model::Model;
use super::propagate::Mode;
use crate::{Error, Result, Rng, Tensor};

/// Per-example corruption levels of one corruption layer paired with the
/// size of each example's gradient contribution.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelNorms {
    /// Layer index of the corruption layer.
    pub corruption_layer: usize,
    /// 0-based position among corruption layers.
    pub ordinal: usize,
    /// First parameterised layer after the corruption layer.
    pub weight_layer: usize,
    pub levels: Vec<f64>,
    /// Norm of each example's contribution to `weight_layer`'s gradient.
    pub norms: Vec<f64>,
    /// Norm of each example's contribution to the output layer's gradient.
    pub final_norms: Vec<f64>,
}

/// One corrupted forward/backward pass over `batch`. An example's
/// contribution to a layer's gradient is its batch row's term in the
/// gradient of the summed (not averaged) loss; for the output layer this is
/// exactly the gradient of that example's own loss.
pub fn grad_norm_by_level(model: &Model, batch: &Tensor, labels: &[usize], rng: &Rng) -> Result<Vec<LevelNorms>> {
    let corruption_layers = model.corruption_layers();
    if corruption_layers.is_empty() {
        return Err(Error::InvalidConfig("model has no corruption layer".into()));
    }
    let pass = model.forward(batch, labels, Mode::Train, rng)?;
    let ones = alloc::vec![1.0; labels.len()];
    let (_, norms) = model.backward_weighted(&pass, labels, &ones, true)?;
    let weight_layers = model.weight_layers();
    let last = *weight_layers.last().expect("softmax follows a weight layer");
    corruption_layers
        .iter()
        .enumerate()
        .map(|(ordinal, &layer)| {
            let weight_layer = weight_layers
                .iter()
                .copied()
                .find(|&w| w > layer)
                .ok_or_else(|| Error::InvalidConfig(alloc::format!("no weight layer after corruption layer {layer}")))?;
            let record = pass.corruption[layer].as_ref().expect("train mode records corruption");
            Ok(LevelNorms {
                corruption_layer: layer,
                ordinal,
                weight_layer,
                levels: record.levels.clone(),
                norms: norms[weight_layer].clone(),
                final_norms: norms[last].clone(),
            })
        })
        .collect()
}
