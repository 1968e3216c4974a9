use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    Dimension { left: Vec<usize>, right: Vec<usize> },
    #[error("shape {shape:?} needs {expected} values, got {actual}")]
    ShapeData {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("invalid corruption level {0}")]
    InvalidLevel(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("batch of {0} example(s) has no distinct partner")]
    InsufficientBatch(usize),
    #[error("mask structure {structure} needs a C×H×W example shape, got {shape:?}")]
    UnsupportedStructure {
        structure: &'static str,
        shape: Vec<usize>,
    },
    #[error("layer {index}: {reason}")]
    LayerShape { index: usize, reason: String },
    #[error("activations do not match the model: {0}")]
    Inconsistent(String),
    #[error("numerical divergence in layer {layer}")]
    Divergence { layer: usize },
    #[error("class {class} has {available} example(s), quota is {quota}")]
    InsufficientClass {
        class: usize,
        available: usize,
        quota: usize,
    },
    #[error("channel {channel} has zero variance")]
    DegenerateChannel { channel: usize },
    #[error("layer {layer} has fewer than two filters with non-constant output")]
    DegenerateLayer { layer: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("table: {0}")]
    Table(String),
}
