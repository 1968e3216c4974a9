//! Forward and backward passes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::ConvGeometry;
use super::layer::LayerSpec;
use super::model::{Gradients, Model, Params};
use crate::corruptor::{corrupt_minibatch, CorruptionRecord};
use crate::math::{exp, log_sum_exp, sqrt};
use crate::tensor::gemm;
use crate::{Error, Result, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Corruption layers corrupt their input.
    Train,
    /// Corruption layers are identities.
    Eval,
}

/// Everything a forward pass produced.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardPass {
    /// `activations[0]` is the input batch, `activations[l + 1]` the output
    /// of layer `l`; the last entry holds the class probabilities.
    pub activations: Vec<Tensor>,
    /// Corruption drawn at each layer (train mode only).
    pub corruption: Vec<Option<CorruptionRecord>>,
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    pub per_example_loss: Vec<f64>,
}

impl ForwardPass {
    pub fn probabilities(&self) -> &Tensor {
        self.activations.last().unwrap()
    }

    /// `(layer index, per-example levels)` for each corruption layer that
    /// was active.
    pub fn levels(&self) -> Vec<(usize, &[f64])> {
        self.corruption
            .iter()
            .enumerate()
            .filter_map(|(l, r)| r.as_ref().map(|r| (l, r.levels.as_slice())))
            .collect()
    }
}

enum Source<'a> {
    Sample(&'a Rng),
    Replay(&'a [Option<CorruptionRecord>]),
    Clean,
}

impl Model {
    /// Runs the batch through every layer. In train mode corruption layer
    /// with ordinal `k` draws from `rng.derive(&[k])`.
    pub fn forward(&self, batch: &Tensor, labels: &[usize], mode: Mode, rng: &Rng) -> Result<ForwardPass> {
        let source = match mode {
            Mode::Train => Source::Sample(rng),
            Mode::Eval => Source::Clean,
        };
        self.run_forward(batch, labels, source)
    }

    /// Forward pass in evaluation mode.
    pub fn forward_eval(&self, batch: &Tensor, labels: &[usize]) -> Result<ForwardPass> {
        self.run_forward(batch, labels, Source::Clean)
    }

    /// Forward pass reusing previously drawn corruption (frozen masks,
    /// levels and partners).
    pub fn forward_frozen(
        &self,
        batch: &Tensor,
        labels: &[usize],
        corruption: &[Option<CorruptionRecord>],
    ) -> Result<ForwardPass> {
        if corruption.len() != self.layers.len() {
            return Err(Error::Inconsistent(format!(
                "{} corruption slots for {} layers",
                corruption.len(),
                self.layers.len()
            )));
        }
        self.run_forward(batch, labels, Source::Replay(corruption))
    }

    fn check_batch(&self, batch: &Tensor, labels: &[usize]) -> Result<()> {
        if batch.rank() < 2 || batch.example_shape() != self.input_shape.as_slice() {
            let mut expected = vec![batch.batch_len()];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::Dimension {
                left: batch.shape().to_vec(),
                right: expected,
            });
        }
        if labels.len() != batch.batch_len() {
            return Err(Error::Dimension {
                left: vec![batch.batch_len()],
                right: vec![labels.len()],
            });
        }
        let k = self.classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::InvalidConfig(format!("label {bad} outside 0..{k}")));
        }
        Ok(())
    }

    fn run_forward(&self, batch: &Tensor, labels: &[usize], source: Source<'_>) -> Result<ForwardPass> {
        self.check_batch(batch, labels)?;
        let m = batch.batch_len();
        let n_layers = self.layers.len();
        let mut acts: Vec<Tensor> = Vec::with_capacity(n_layers + 1);
        acts.push(batch.clone());
        let mut corruption = vec![None; n_layers];
        let mut per_example_loss = Vec::new();
        let mut ordinal = 0;
        for (l, layer) in self.layers.iter().enumerate() {
            let x = acts.last().unwrap();
            let mut out_shape = vec![m];
            out_shape.extend_from_slice(&self.shapes[l + 1]);
            let y = match layer {
                LayerSpec::Dense { .. } => dense_forward(x, self.params[l].as_ref().unwrap(), out_shape),
                LayerSpec::Conv2d { kernel, stride, pad, .. } => {
                    let geo = ConvGeometry::new(&self.shapes[l], *kernel, *stride, *pad);
                    conv_forward(x, self.params[l].as_ref().unwrap(), &geo, out_shape)
                }
                LayerSpec::Relu => {
                    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                    Tensor::from_parts(out_shape, data)
                }
                LayerSpec::Flatten => Tensor::from_parts(out_shape, x.data().to_vec()),
                LayerSpec::Corruption(spec) => {
                    let y = match &source {
                        Source::Sample(rng) => {
                            let mut rng = rng.derive(&[ordinal as u64]);
                            let c = corrupt_minibatch(x, spec, &mut rng, ordinal)?;
                            corruption[l] = Some(c.record);
                            c.output
                        }
                        Source::Replay(records) => match &records[l] {
                            Some(r) => {
                                let y = r.apply(x)?;
                                corruption[l] = Some(r.clone());
                                y
                            }
                            None => x.clone(),
                        },
                        Source::Clean => x.clone(),
                    };
                    ordinal += 1;
                    y
                }
                LayerSpec::SoftmaxOutput => {
                    let k = self.shapes[l][0];
                    let mut probs = vec![0.0; m * k];
                    per_example_loss.reserve(m);
                    for i in 0..m {
                        let z = x.example(i);
                        let lse = log_sum_exp(z);
                        for (p, &zc) in probs[i * k..(i + 1) * k].iter_mut().zip(z) {
                            *p = exp(zc - lse);
                        }
                        per_example_loss.push(lse - z[labels[i]]);
                    }
                    Tensor::from_parts(out_shape, probs)
                }
            };
            if y.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { layer: l });
            }
            acts.push(y);
        }
        let loss = per_example_loss.iter().sum::<f64>() / m as f64;
        Ok(ForwardPass {
            activations: acts,
            corruption,
            loss,
            per_example_loss,
        })
    }

    /// Gradient of the mean batch loss w.r.t. every parameter. Corruption
    /// masks of the pass are constants.
    pub fn backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<Gradients> {
        let m = labels.len().max(1);
        let weights = vec![1.0 / m as f64; labels.len()];
        Ok(self.backward_weighted(pass, labels, &weights, false)?.0)
    }

    /// Gradient of `sum_i weights[i] * loss_i`. With `per_example`, also
    /// returns for every weight layer the Euclidean norm of each batch row's
    /// contribution to that layer's gradient (empty for other layers).
    pub(crate) fn backward_weighted(
        &self,
        pass: &ForwardPass,
        labels: &[usize],
        weights: &[f64],
        per_example: bool,
    ) -> Result<(Gradients, Vec<Vec<f64>>)> {
        let n_layers = self.layers.len();
        let acts = &pass.activations;
        if acts.len() != n_layers + 1 || pass.corruption.len() != n_layers {
            return Err(Error::Inconsistent(format!(
                "{} activations for {} layers",
                acts.len(),
                n_layers
            )));
        }
        let m = acts[0].batch_len();
        for (l, a) in acts.iter().enumerate() {
            if a.batch_len() != m || a.example_shape() != self.shapes[l].as_slice() {
                return Err(Error::Inconsistent(format!(
                    "activation {l} has shape {:?}, model expects {:?}",
                    a.shape(),
                    self.shapes[l]
                )));
            }
        }
        if labels.len() != m || weights.len() != m {
            return Err(Error::Inconsistent(format!(
                "{} labels / {} weights for a batch of {m}",
                labels.len(),
                weights.len()
            )));
        }

        let k = self.classes();
        let probs = acts[n_layers].data();
        let mut g = vec![0.0; m * k];
        for i in 0..m {
            for c in 0..k {
                let onehot = if c == labels[i] { 1.0 } else { 0.0 };
                g[i * k + c] = weights[i] * (probs[i * k + c] - onehot);
            }
        }
        let mut grad = Tensor::from_parts(acts[n_layers - 1].shape().to_vec(), g);

        let mut layer_grads: Vec<Option<Params>> = vec![None; n_layers];
        let mut norms: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
        let Some(lowest) = self.params.iter().position(Option::is_some) else {
            return Ok((Gradients { layers: layer_grads }, norms));
        };
        for l in (lowest..n_layers - 1).rev() {
            let x = &acts[l];
            let need_input = l > lowest;
            grad = match &self.layers[l] {
                LayerSpec::Dense { .. } => {
                    let p = self.params[l].as_ref().unwrap();
                    let (gp, gin, ex) = dense_backward(x, p, &grad, need_input, per_example);
                    layer_grads[l] = Some(gp);
                    norms[l] = ex;
                    gin
                }
                LayerSpec::Conv2d { kernel, stride, pad, .. } => {
                    let p = self.params[l].as_ref().unwrap();
                    let geo = ConvGeometry::new(&self.shapes[l], *kernel, *stride, *pad);
                    let (gp, gin, ex) = conv_backward(x, p, &geo, &grad, need_input, per_example);
                    layer_grads[l] = Some(gp);
                    norms[l] = ex;
                    gin
                }
                LayerSpec::Relu => {
                    let data = grad
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                        .collect();
                    Tensor::from_parts(x.shape().to_vec(), data)
                }
                LayerSpec::Flatten => Tensor::from_parts(x.shape().to_vec(), grad.into_data()),
                LayerSpec::Corruption(_) => match &pass.corruption[l] {
                    Some(r) => r.backward(&grad),
                    None => grad,
                },
                LayerSpec::SoftmaxOutput => unreachable!("softmax is always last"),
            };
        }
        Ok((Gradients { layers: layer_grads }, norms))
    }
}

fn dense_forward(x: &Tensor, p: &Params, out_shape: Vec<usize>) -> Tensor {
    let m = x.batch_len();
    let (units, fan_in) = (p.weight.shape()[0], p.weight.shape()[1]);
    let mut out = vec![0.0; m * units];
    gemm(m, fan_in, units, x.data(), false, p.weight.data(), true, 0.0, &mut out);
    let b = p.bias.data();
    for row in out.chunks_exact_mut(units) {
        row.iter_mut().zip(b).for_each(|(v, &bi)| *v += bi);
    }
    Tensor::from_parts(out_shape, out)
}

fn dense_backward(
    x: &Tensor,
    p: &Params,
    grad: &Tensor,
    need_input: bool,
    per_example: bool,
) -> (Params, Tensor, Vec<f64>) {
    let m = x.batch_len();
    let (units, fan_in) = (p.weight.shape()[0], p.weight.shape()[1]);
    let g = grad.data();
    let mut dw = vec![0.0; units * fan_in];
    gemm(units, m, fan_in, g, true, x.data(), false, 0.0, &mut dw);
    let mut db = vec![0.0; units];
    for row in g.chunks_exact(units) {
        db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
    }
    let norms = if per_example {
        (0..m)
            .map(|i| {
                let gi: f64 = g[i * units..(i + 1) * units].iter().map(|v| v * v).sum();
                let xi: f64 = x.example(i).iter().map(|v| v * v).sum();
                sqrt(gi * (xi + 1.0))
            })
            .collect()
    } else {
        Vec::new()
    };
    let gin = if need_input {
        let mut gin = vec![0.0; m * fan_in];
        gemm(m, units, fan_in, g, false, p.weight.data(), false, 0.0, &mut gin);
        Tensor::from_parts(x.shape().to_vec(), gin)
    } else {
        Tensor::zeros(&[1])
    };
    let params = Params {
        weight: Tensor::from_parts(p.weight.shape().to_vec(), dw),
        bias: Tensor::from_parts(vec![units], db),
    };
    (params, gin, norms)
}

fn conv_forward(x: &Tensor, p: &Params, geo: &ConvGeometry, out_shape: Vec<usize>) -> Tensor {
    let m = x.batch_len();
    let filters = p.weight.shape()[0];
    let (rows, cols_n) = (geo.patch_len(), geo.positions());
    let mut cols = vec![0.0; rows * cols_n];
    let mut out = vec![0.0; m * filters * cols_n];
    for i in 0..m {
        geo.im2col(x.example(i), &mut cols);
        let dst = &mut out[i * filters * cols_n..(i + 1) * filters * cols_n];
        gemm(filters, rows, cols_n, p.weight.data(), false, &cols, false, 0.0, dst);
        for (f, row) in dst.chunks_exact_mut(cols_n).enumerate() {
            let b = p.bias.data()[f];
            row.iter_mut().for_each(|v| *v += b);
        }
    }
    Tensor::from_parts(out_shape, out)
}

fn conv_backward(
    x: &Tensor,
    p: &Params,
    geo: &ConvGeometry,
    grad: &Tensor,
    need_input: bool,
    per_example: bool,
) -> (Params, Tensor, Vec<f64>) {
    let m = x.batch_len();
    let filters = p.weight.shape()[0];
    let (rows, positions) = (geo.patch_len(), geo.positions());
    let mut cols = vec![0.0; rows * positions];
    let mut gcols = vec![0.0; rows * positions];
    let mut dw = vec![0.0; filters * rows];
    let mut tmp = vec![0.0; filters * rows];
    let mut db = vec![0.0; filters];
    let mut gin = if need_input {
        vec![0.0; x.len()]
    } else {
        Vec::new()
    };
    let mut norms = Vec::new();
    let in_len = x.example_len();
    for i in 0..m {
        let gi = grad.example(i);
        geo.im2col(x.example(i), &mut cols);
        let mut bias_sq = 0.0;
        for (f, row) in gi.chunks_exact(positions).enumerate() {
            let s: f64 = row.iter().sum();
            db[f] += s;
            bias_sq += s * s;
        }
        if per_example {
            gemm(filters, positions, rows, gi, false, &cols, true, 0.0, &mut tmp);
            let w_sq: f64 = tmp.iter().map(|v| v * v).sum();
            norms.push(sqrt(w_sq + bias_sq));
            dw.iter_mut().zip(&tmp).for_each(|(d, &t)| *d += t);
        } else {
            gemm(filters, positions, rows, gi, false, &cols, true, 1.0, &mut dw);
        }
        if need_input {
            gemm(rows, filters, positions, p.weight.data(), true, gi, false, 0.0, &mut gcols);
            geo.col2im(&gcols, &mut gin[i * in_len..(i + 1) * in_len]);
        }
    }
    let gin = if need_input {
        Tensor::from_parts(x.shape().to_vec(), gin)
    } else {
        Tensor::zeros(&[1])
    };
    let params = Params {
        weight: Tensor::from_parts(p.weight.shape().to_vec(), dw),
        bias: Tensor::from_parts(vec![filters], db),
    };
    (params, gin, norms)
}
