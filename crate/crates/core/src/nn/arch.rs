//! Ready-made layer stacks for the experiments.

use alloc::vec;
use alloc::vec::Vec;

use super::layer::LayerSpec;
use crate::corruptor::{CorruptionSpec, MaskStructure};

/// Multilayer perceptron: optional input corruption, then for each hidden
/// width `dense → relu → [corruption]`, then `dense(classes) → softmax`.
pub fn mlp(
    hidden: &[usize],
    classes: usize,
    input: Option<CorruptionSpec>,
    hidden_corruption: Option<CorruptionSpec>,
) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    if let Some(spec) = input {
        layers.push(LayerSpec::Corruption(spec));
    }
    layers.push(LayerSpec::Flatten);
    for &units in hidden {
        layers.push(LayerSpec::Dense { units });
        layers.push(LayerSpec::Relu);
        if let Some(spec) = hidden_corruption {
            layers.push(LayerSpec::Corruption(spec));
        }
    }
    layers.push(LayerSpec::Dense { units: classes });
    layers.push(LayerSpec::SoftmaxOutput);
    layers
}

/// Small convolutional network:
/// `conv(32, 3×3, pad 1) → relu → C → conv(32, 3×3, stride 2) → relu → C →
/// dense(128) → relu → C → dense(classes) → softmax`, where `C` is the
/// corruption layer (omitted when `corruption` is `None`). The corruption
/// after the dense layer always uses elementwise masks.
pub fn stand_in(classes: usize, corruption: Option<CorruptionSpec>) -> Vec<LayerSpec> {
    let c = |layers: &mut Vec<LayerSpec>| {
        if let Some(spec) = corruption {
            let spec = match layers.last() {
                Some(LayerSpec::Relu) if matches!(layers[layers.len() - 2], LayerSpec::Dense { .. }) => {
                    spec.with_structure(MaskStructure::Elementwise)
                }
                _ => spec,
            };
            layers.push(LayerSpec::Corruption(spec));
        }
    };
    let mut layers = vec![LayerSpec::conv(32, 3, 1, 1), LayerSpec::Relu];
    c(&mut layers);
    layers.extend([LayerSpec::conv(32, 3, 2, 0), LayerSpec::Relu]);
    c(&mut layers);
    layers.extend([LayerSpec::Flatten, LayerSpec::Dense { units: 128 }, LayerSpec::Relu]);
    c(&mut layers);
    layers.extend([LayerSpec::Dense { units: classes }, LayerSpec::SoftmaxOutput]);
    layers
}
