//! Dropout and hybrid bootstrap corruption.
//!
//! A mask bit of 1 keeps the example's own value; 0 marks a corrupted site,
//! which dropout zeroes and the hybrid bootstrap fills with the value at the
//! same coordinate of a partner example. The corruption level `p` is the
//! probability that a site is corrupted, for both schemes.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Dropout,
    Hybrid,
}

/// Which sites share a mask bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskStructure {
    /// Every element independently.
    Elementwise,
    /// One bit per spatial position, shared by all channels.
    SpatialGrid,
    /// One bit per channel, shared by the whole feature map.
    Channel,
}

impl MaskStructure {
    pub fn name(self) -> &'static str {
        match self {
            Self::Elementwise => "elementwise",
            Self::SpatialGrid => "spatial_grid",
            Self::Channel => "channel",
        }
    }
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Self::Dropout => "dropout",
            Self::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for MaskStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dropout" => Ok(Self::Dropout),
            "hybrid" | "hb" => Ok(Self::Hybrid),
            _ => Err(Error::InvalidConfig(alloc::format!("unknown scheme `{s}`"))),
        }
    }
}

impl FromStr for MaskStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elementwise" => Ok(Self::Elementwise),
            "spatial_grid" => Ok(Self::SpatialGrid),
            "channel" => Ok(Self::Channel),
            _ => Err(Error::InvalidConfig(alloc::format!(
                "unknown mask structure `{s}`"
            ))),
        }
    }
}

/// How a corruption layer corrupts its input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorruptionSpec {
    pub scheme: Scheme,
    pub structure: MaskStructure,
    /// Levels are drawn from `Uniform[0, u)`.
    pub u: f64,
    /// When set, used as the level for every example instead of sampling.
    pub fixed_p: Option<f64>,
    /// Inverted-dropout `1/(1-p)` scaling of kept values. Dropout only.
    pub normalize: bool,
}

impl CorruptionSpec {
    pub fn hybrid(u: f64) -> Self {
        Self {
            scheme: Scheme::Hybrid,
            structure: MaskStructure::Elementwise,
            u,
            fixed_p: None,
            normalize: false,
        }
    }

    pub fn dropout(u: f64) -> Self {
        Self {
            scheme: Scheme::Dropout,
            structure: MaskStructure::Elementwise,
            u,
            fixed_p: None,
            normalize: true,
        }
    }

    pub fn with_structure(mut self, structure: MaskStructure) -> Self {
        self.structure = structure;
        self
    }

    pub fn with_fixed_p(mut self, p: f64) -> Self {
        self.fixed_p = Some(p);
        self
    }

    pub fn with_normalize(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.u) {
            return Err(Error::InvalidLevel(self.u));
        }
        if let Some(p) = self.fixed_p {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidLevel(p));
            }
            if p == 1.0 && self.scheme == Scheme::Dropout && self.normalize {
                return Err(Error::InvalidLevel(p));
            }
        }
        Ok(())
    }
}

/// Binary keep-mask over one example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    shape: Vec<usize>,
    bits: Vec<bool>,
    structure: MaskStructure,
}

impl Mask {
    /// Elementwise mask from explicit bits (`true` keeps the own value).
    pub fn from_bits(shape: &[usize], bits: Vec<bool>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != bits.len() {
            return Err(Error::ShapeData {
                shape: shape.to_vec(),
                expected: n,
                actual: bits.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            bits,
            structure: MaskStructure::Elementwise,
        })
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            bits: vec![true; shape.iter().product()],
            structure: MaskStructure::Elementwise,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            bits: vec![false; shape.iter().product()],
            structure: MaskStructure::Elementwise,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn structure(&self) -> MaskStructure {
        self.structure
    }

    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.bits.iter().filter(|&&b| !b).count();
        zeros as f64 / self.bits.len() as f64
    }

    /// Whether the bits satisfy the broadcast pattern of the mask's structure.
    pub fn is_consistent(&self) -> bool {
        match (self.structure, self.shape.as_slice()) {
            (MaskStructure::Elementwise, _) => true,
            (MaskStructure::SpatialGrid, &[c, h, w]) => {
                let plane = h * w;
                (1..c).all(|ch| self.bits[ch * plane..(ch + 1) * plane] == self.bits[..plane])
            }
            (MaskStructure::Channel, &[c, h, w]) => {
                let plane = h * w;
                (0..c).all(|ch| {
                    let s = &self.bits[ch * plane..(ch + 1) * plane];
                    s.iter().all(|&b| b == s[0])
                })
            }
            _ => false,
        }
    }
}

/// Corruption level for one example: `fixed_p` if set, else a fresh draw
/// from `Uniform[0, u)`.
pub fn sample_level(rng: &mut Rng, spec: &CorruptionSpec) -> f64 {
    match spec.fixed_p {
        Some(p) => p,
        None => rng.uniform() * spec.u,
    }
}

/// Draws a keep-mask where every independent site is corrupted with
/// probability `p`.
pub fn sample_mask(rng: &mut Rng, shape: &[usize], p: f64, structure: MaskStructure) -> Result<Mask> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidLevel(p));
    }
    let len: usize = shape.iter().product();
    let mut keep = || rng.uniform() >= p;
    let bits = match structure {
        MaskStructure::Elementwise => (0..len).map(|_| keep()).collect(),
        MaskStructure::SpatialGrid | MaskStructure::Channel => {
            let &[c, h, w] = shape else {
                return Err(Error::UnsupportedStructure {
                    structure: structure.name(),
                    shape: shape.to_vec(),
                });
            };
            let plane = h * w;
            let mut bits = Vec::with_capacity(len);
            if structure == MaskStructure::SpatialGrid {
                let grid: Vec<bool> = (0..plane).map(|_| keep()).collect();
                for _ in 0..c {
                    bits.extend_from_slice(&grid);
                }
            } else {
                for _ in 0..c {
                    let b = keep();
                    bits.extend(core::iter::repeat_n(b, plane));
                }
            }
            bits
        }
    };
    Ok(Mask {
        shape: shape.to_vec(),
        bits,
        structure,
    })
}

fn dropout_scale(p: f64, normalize: bool) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidLevel(p));
    }
    if !normalize {
        return Ok(1.0);
    }
    if p >= 1.0 {
        return Err(Error::InvalidLevel(p));
    }
    Ok(1.0 / (1.0 - p))
}

fn check_mask(x: &Tensor, mask: &Mask) -> Result<()> {
    if x.shape() != mask.shape() {
        return Err(Error::Dimension {
            left: x.shape().to_vec(),
            right: mask.shape().to_vec(),
        });
    }
    Ok(())
}

/// `x ⊙ ε`, scaled by `1/(1-p)` when `normalize`.
pub fn dropout_apply(x: &Tensor, mask: &Mask, p: f64, normalize: bool) -> Result<Tensor> {
    check_mask(x, mask)?;
    let scale = dropout_scale(p, normalize)?;
    let mut out = x.clone();
    dropout_into(out.data_mut(), x.data(), mask.bits(), scale);
    Ok(out)
}

/// `x ⊙ ε + partner ⊙ (1 - ε)`. No rescaling.
pub fn hybrid_apply(x: &Tensor, partner: &Tensor, mask: &Mask) -> Result<Tensor> {
    if x.shape() != partner.shape() {
        return Err(Error::Dimension {
            left: x.shape().to_vec(),
            right: partner.shape().to_vec(),
        });
    }
    check_mask(x, mask)?;
    let mut out = x.clone();
    hybrid_into(out.data_mut(), x.data(), partner.data(), mask.bits());
    Ok(out)
}

#[inline]
fn dropout_into(out: &mut [f64], x: &[f64], bits: &[bool], scale: f64) {
    for ((o, &v), &keep) in out.iter_mut().zip(x).zip(bits) {
        *o = if keep { v * scale } else { 0.0 };
    }
}

#[inline]
fn hybrid_into(out: &mut [f64], x: &[f64], partner: &[f64], bits: &[bool]) {
    for (((o, &v), &q), &keep) in out.iter_mut().zip(x).zip(partner).zip(bits) {
        *o = if keep { v } else { q };
    }
}

/// Minibatch-shift partner: corruption layer `layer_ordinal` pairs batch
/// position `i` with `(i + layer_ordinal + 1) mod m`.
pub fn partner_index(i: usize, layer_ordinal: usize, m: usize) -> Result<usize> {
    if m < 2 {
        return Err(Error::InsufficientBatch(m));
    }
    if i >= m {
        return Err(Error::InvalidConfig(alloc::format!(
            "batch position {i} out of range for batch of {m}"
        )));
    }
    Ok((i + (layer_ordinal % m) + 1) % m)
}

/// Everything drawn while corrupting one minibatch, enough to replay the
/// corruption exactly and to backpropagate through it.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptionRecord {
    pub scheme: Scheme,
    pub layer_ordinal: usize,
    /// Per-example corruption level.
    pub levels: Vec<f64>,
    pub masks: Vec<Mask>,
    /// Per-example multiplier on kept values (dropout normalization; 1 for hybrid).
    pub scales: Vec<f64>,
}

impl CorruptionRecord {
    pub fn batch_len(&self) -> usize {
        self.levels.len()
    }

    pub fn partner(&self, i: usize) -> usize {
        (i + (self.layer_ordinal % self.batch_len()) + 1) % self.batch_len()
    }

    /// Re-applies the recorded masks to a (possibly different) batch of the
    /// same shape.
    pub fn apply(&self, batch: &Tensor) -> Result<Tensor> {
        let m = batch.batch_len();
        if m != self.batch_len() || self.masks.first().map(|k| k.shape()) != Some(batch.example_shape()) {
            return Err(Error::Inconsistent(alloc::format!(
                "corruption record for {} example(s) replayed on batch shape {:?}",
                self.batch_len(),
                batch.shape()
            )));
        }
        let mut out = batch.clone();
        for i in 0..m {
            let bits = self.masks[i].bits();
            match self.scheme {
                Scheme::Dropout => dropout_into(out.example_mut(i), batch.example(i), bits, self.scales[i]),
                Scheme::Hybrid => {
                    let j = self.partner(i);
                    hybrid_into(out.example_mut(i), batch.example(i), batch.example(j), bits)
                }
            }
        }
        Ok(out)
    }

    /// Gradient w.r.t. the uncorrupted batch, masks held fixed. For the
    /// hybrid scheme the swapped-in coordinates route their gradient back to
    /// the partner example.
    pub fn backward(&self, grad_out: &Tensor) -> Tensor {
        let mut grad_in = Tensor::zeros(grad_out.shape());
        let m = self.batch_len();
        let n = grad_out.example_len();
        let (g, gi) = (grad_out.data(), grad_in.data_mut());
        for i in 0..m {
            let bits = self.masks[i].bits();
            let row = &g[i * n..(i + 1) * n];
            match self.scheme {
                Scheme::Dropout => {
                    let s = self.scales[i];
                    for ((dst, &v), &keep) in gi[i * n..(i + 1) * n].iter_mut().zip(row).zip(bits) {
                        if keep {
                            *dst += v * s;
                        }
                    }
                }
                Scheme::Hybrid => {
                    let j = self.partner(i);
                    for (k, (&v, &keep)) in row.iter().zip(bits).enumerate() {
                        let dst = if keep { i } else { j };
                        gi[dst * n + k] += v;
                    }
                }
            }
        }
        grad_in
    }
}

/// Output of [`corrupt_minibatch`].
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedBatch {
    pub output: Tensor,
    pub record: CorruptionRecord,
}

impl CorruptedBatch {
    pub fn levels(&self) -> &[f64] {
        &self.record.levels
    }
}

/// Corrupts every example of `batch` (leading axis = batch) with its own
/// level and mask. Hybrid partners follow the minibatch shift for
/// `layer_ordinal`.
pub fn corrupt_minibatch(
    batch: &Tensor,
    spec: &CorruptionSpec,
    rng: &mut Rng,
    layer_ordinal: usize,
) -> Result<CorruptedBatch> {
    spec.validate()?;
    let m = batch.batch_len();
    if spec.scheme == Scheme::Hybrid && m < 2 {
        return Err(Error::InsufficientBatch(m));
    }
    let example_shape = batch.example_shape().to_vec();
    let normalize = spec.scheme == Scheme::Dropout && spec.normalize;
    let mut levels = Vec::with_capacity(m);
    let mut masks = Vec::with_capacity(m);
    let mut scales = Vec::with_capacity(m);
    for _ in 0..m {
        let p = sample_level(rng, spec);
        let mask = sample_mask(rng, &example_shape, p, spec.structure)?;
        scales.push(match spec.scheme {
            Scheme::Dropout => dropout_scale(p, normalize)?,
            Scheme::Hybrid => 1.0,
        });
        levels.push(p);
        masks.push(mask);
    }
    let record = CorruptionRecord {
        scheme: spec.scheme,
        layer_ordinal,
        levels,
        masks,
        scales,
    };
    let output = record.apply(batch)?;
    Ok(CorruptedBatch { output, record })
}
