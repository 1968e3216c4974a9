use alloc::vec;
use alloc::vec::Vec;

use crate::corruptor::{CorruptionSpec, MaskStructure};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// Fully connected; inputs of any rank are read flattened.
    Dense { units: usize },
    /// 2-D convolution over a `C×H×W` input.
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Flatten,
    /// Train-time corruption; identity in evaluation.
    Corruption(CorruptionSpec),
    /// Softmax producing class probabilities; must be the last layer.
    SoftmaxOutput,
}

/// `(weight, bias)` extents.
type ParamShapes = (Vec<usize>, Vec<usize>);

impl LayerSpec {
    pub fn conv(filters: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self::Conv2d {
            filters,
            kernel,
            stride,
            pad,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Self::Dense { .. } | Self::Conv2d { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Dense { .. } => "dense",
            Self::Conv2d { .. } => "conv2d",
            Self::Relu => "relu",
            Self::Flatten => "flatten",
            Self::Corruption(_) => "corruption",
            Self::SoftmaxOutput => "softmax_output",
        }
    }

    /// Output extents for the given input extents, plus the
    /// `(weight, bias)` shapes for parametrised layers.
    pub(crate) fn output_shape(
        &self,
        index: usize,
        input: &[usize],
    ) -> Result<(Vec<usize>, Option<ParamShapes>)> {
        let fail = |reason: alloc::string::String| Error::LayerShape { index, reason };
        let flat: usize = input.iter().product();
        match *self {
            Self::Dense { units } => {
                if units == 0 {
                    return Err(fail("dense layer with zero units".into()));
                }
                Ok((vec![units], Some((vec![units, flat], vec![units]))))
            }
            Self::Conv2d {
                filters,
                kernel,
                stride,
                pad,
            } => {
                let &[c, h, w] = input else {
                    return Err(fail(alloc::format!("conv2d needs a C×H×W input, got {input:?}")));
                };
                if filters == 0 || kernel == 0 || stride == 0 {
                    return Err(fail("conv2d extents must be positive".into()));
                }
                if h + 2 * pad < kernel || w + 2 * pad < kernel {
                    return Err(fail(alloc::format!(
                        "kernel {kernel} larger than padded input {input:?}"
                    )));
                }
                let ho = (h + 2 * pad - kernel) / stride + 1;
                let wo = (w + 2 * pad - kernel) / stride + 1;
                Ok((
                    vec![filters, ho, wo],
                    Some((vec![filters, c * kernel * kernel], vec![filters])),
                ))
            }
            Self::Relu => Ok((input.to_vec(), None)),
            Self::Flatten => Ok((vec![flat], None)),
            Self::Corruption(spec) => {
                spec.validate().map_err(|e| fail(alloc::format!("{e}")))?;
                if spec.structure != MaskStructure::Elementwise && input.len() != 3 {
                    return Err(fail(alloc::format!(
                        "{} corruption needs a C×H×W input, got {input:?}",
                        spec.structure
                    )));
                }
                Ok((input.to_vec(), None))
            }
            Self::SoftmaxOutput => {
                if input.len() != 1 || input[0] < 2 {
                    return Err(fail(alloc::format!(
                        "softmax output needs a flat input of at least 2 classes, got {input:?}"
                    )));
                }
                Ok((input.to_vec(), None))
            }
        }
    }
}
