//! Filter redundancy: how strongly the responses of a conv layer's filters
//! correlate with each other over a probe set.

use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{LayerSpec, Model};
use crate::stats::{median, pearson};
use crate::{Error, Result, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    pub layer_index: usize,
    pub filters: usize,
    /// Filters whose response varies over the probe set.
    pub active_filters: Vec<usize>,
    /// Signed Pearson correlations, row-major `filters × filters`;
    /// `None` where either filter is constant.
    correlations: Vec<Option<f64>>,
    pub median_abs_corr: f64,
}

impl CorrelationReport {
    pub fn corr(&self, i: usize, j: usize) -> Option<f64> {
        self.correlations[i * self.filters + j]
    }

    /// `|corr(i, j)|` for every unordered pair of active filters.
    pub fn abs_pairs(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (a, &i) in self.active_filters.iter().enumerate() {
            for &j in &self.active_filters[a + 1..] {
                out.push(self.corr(i, j).unwrap().abs());
            }
        }
        out
    }
}

/// Per-filter response vectors of conv layer `layer_index`, taken after its
/// ReLU when one follows directly, each pooled over (example, position).
pub fn filter_responses(model: &Model, probe: &Tensor, layer_index: usize) -> Result<Vec<Vec<f64>>> {
    let Some(LayerSpec::Conv2d { filters, .. }) = model.layers().get(layer_index) else {
        return Err(Error::LayerShape {
            index: layer_index,
            reason: "not a conv2d layer".into(),
        });
    };
    let filters = *filters;
    let n = probe.batch_len();
    if n < 2 {
        return Err(Error::InsufficientData("correlation needs at least two probe examples".into()));
    }
    let pass = model.forward_eval(probe, &vec![0; n])?;
    let post = match model.layers().get(layer_index + 1) {
        Some(LayerSpec::Relu) => layer_index + 2,
        _ => layer_index + 1,
    };
    let acts = &pass.activations[post];
    let positions = acts.example_len() / filters;
    let mut responses = vec![Vec::with_capacity(n * positions); filters];
    for i in 0..n {
        for (f, row) in acts.example(i).chunks_exact(positions).enumerate() {
            responses[f].extend_from_slice(row);
        }
    }
    Ok(responses)
}

pub fn filter_correlation(model: &Model, probe: &Tensor, layer_index: usize) -> Result<CorrelationReport> {
    let responses = filter_responses(model, probe, layer_index)?;
    let filters = responses.len();
    let active_filters: Vec<usize> = (0..filters)
        .filter(|&f| responses[f].iter().any(|&v| v != responses[f][0]))
        .collect();
    if active_filters.len() < 2 {
        return Err(Error::DegenerateLayer { layer: layer_index });
    }
    let mut correlations = vec![None; filters * filters];
    let mut abs = Vec::new();
    for (a, &i) in active_filters.iter().enumerate() {
        correlations[i * filters + i] = Some(1.0);
        for &j in &active_filters[a + 1..] {
            let r = pearson(&responses[i], &responses[j]);
            correlations[i * filters + j] = r;
            correlations[j * filters + i] = r;
            if let Some(r) = r {
                abs.push(r.abs());
            }
        }
    }
    let median_abs_corr = median(&abs).ok_or(Error::DegenerateLayer { layer: layer_index })?;
    Ok(CorrelationReport {
        layer_index,
        filters,
        active_filters,
        correlations,
        median_abs_corr,
    })
}
