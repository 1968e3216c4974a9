use alloc::vec::Vec;

use super::layer::LayerSpec;
use super::model::Model;
use super::propagate::{ForwardPass, Mode};
use crate::math::abs;
use crate::{Result, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    /// Flat index of the parameter attaining the worst error.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Parameters skipped because a perturbation moved some ReLU input
    /// across its kink.
    pub excluded: usize,
}

fn relu_pattern(model: &Model, pass: &ForwardPass) -> Vec<bool> {
    let mut bits = Vec::new();
    for (l, layer) in model.layers.iter().enumerate() {
        if *layer == LayerSpec::Relu {
            bits.extend(pass.activations[l].data().iter().map(|&v| v > 0.0));
        }
    }
    bits
}

/// Compares `backward` against central differences for every parameter.
/// Corruption is drawn once from `rng` and then held fixed.
pub fn gradient_check(
    model: &Model,
    batch: &Tensor,
    labels: &[usize],
    perturbation: f64,
    rng: &Rng,
) -> Result<GradCheckReport> {
    let base = model.forward(batch, labels, Mode::Train, rng)?;
    let analytic = model.backward(&base, labels)?.flat();
    let pattern = relu_pattern(model, &base);
    let frozen = base.corruption.clone();

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        excluded: 0,
    };
    for (flat, &a) in analytic.iter().enumerate() {
        let (layer, is_bias, offset) = probe.locate(flat).expect("flat index in range");
        let original = *probe.param_value_mut(layer, is_bias, offset);

        *probe.param_value_mut(layer, is_bias, offset) = original + perturbation;
        let plus = probe.forward_frozen(batch, labels, &frozen)?;
        *probe.param_value_mut(layer, is_bias, offset) = original - perturbation;
        let minus = probe.forward_frozen(batch, labels, &frozen)?;
        *probe.param_value_mut(layer, is_bias, offset) = original;

        if relu_pattern(&probe, &plus) != pattern || relu_pattern(&probe, &minus) != pattern {
            report.excluded += 1;
            continue;
        }
        let numeric = (plus.loss - minus.loss) / (2.0 * perturbation);
        let denom = abs(a).max(abs(numeric)).max(1e-8);
        let rel = abs(a - numeric) / denom;
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(flat);
        }
    }
    Ok(report)
}
