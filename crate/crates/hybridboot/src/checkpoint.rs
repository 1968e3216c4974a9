//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "HBNN" | version u16 | input rank u32 | input extents u64.. | layer count u32
//! per layer: kind u8 | kind fields | parameter blocks (dense, conv2d)
//! parameter block: rank u32 | extents u64.. | values f64..
//! ```
//!
//! Kind fields: dense `units u64`; conv2d `filters kernel stride pad` (u64
//! each); corruption `scheme u8, structure u8, u f64, has_fixed u8, fixed f64,
//! normalize u8`; relu, flatten and softmax have none. Each parametrised
//! layer stores its weight block then its bias block.

use std::path::Path;

use hybridboot_core::corruptor::{CorruptionSpec, MaskStructure, Scheme};
use hybridboot_core::nn::{LayerSpec, Model};
use hybridboot_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HBNN";
pub const VERSION: u16 = 1;

const DENSE: u8 = 1;
const CONV2D: u8 = 2;
const RELU: u8 = 3;
const FLATTEN: u8 = 4;
const CORRUPTION: u8 = 5;
const SOFTMAX: u8 = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointError {
    pub offset: u64,
    pub reason: String,
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_block(out: &mut Vec<u8>, t: &Tensor) {
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        put_u64(out, d);
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.input_shape().len() as u32).to_le_bytes());
    for &d in model.input_shape() {
        put_u64(&mut out, d);
    }
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for (i, layer) in model.layers().iter().enumerate() {
        match *layer {
            LayerSpec::Dense { units } => {
                out.push(DENSE);
                put_u64(&mut out, units);
            }
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                pad,
            } => {
                out.push(CONV2D);
                for v in [filters, kernel, stride, pad] {
                    put_u64(&mut out, v);
                }
            }
            LayerSpec::Relu => out.push(RELU),
            LayerSpec::Flatten => out.push(FLATTEN),
            LayerSpec::SoftmaxOutput => out.push(SOFTMAX),
            LayerSpec::Corruption(spec) => {
                out.push(CORRUPTION);
                out.push(match spec.scheme {
                    Scheme::Dropout => 0,
                    Scheme::Hybrid => 1,
                });
                out.push(match spec.structure {
                    MaskStructure::Elementwise => 0,
                    MaskStructure::SpatialGrid => 1,
                    MaskStructure::Channel => 2,
                });
                out.extend_from_slice(&spec.u.to_le_bytes());
                out.push(spec.fixed_p.is_some() as u8);
                out.extend_from_slice(&spec.fixed_p.unwrap_or(0.0).to_le_bytes());
                out.push(spec.normalize as u8);
            }
        }
        if let Some(p) = model.params(i) {
            put_block(&mut out, &p.weight);
            put_block(&mut out, &p.bias);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail(&self, reason: impl Into<String>) -> CheckpointError {
        CheckpointError {
            offset: self.pos as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.fail(format!("truncated: need {n} more bytes")));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize, CheckpointError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| self.fail("extent out of range"))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn extents(&mut self, rank: usize) -> Result<Vec<usize>, CheckpointError> {
        if rank > 8 {
            return Err(self.fail(format!("rank {rank} too large")));
        }
        (0..rank).map(|_| self.u64()).collect()
    }

    fn block(&mut self) -> Result<Tensor, CheckpointError> {
        let rank = self.u32()?;
        let shape = self.extents(rank)?;
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&l| l <= (self.bytes.len() - self.pos) / 8)
            .ok_or_else(|| self.fail("parameter block larger than file"))?;
        let start = self.pos;
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
        Tensor::new(shape, data).map_err(|e| CheckpointError {
            offset: start as u64,
            reason: e.to_string(),
        })
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model, CheckpointError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(CheckpointError {
            offset: 0,
            reason: "not a checkpoint (bad magic)".into(),
        });
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(c.fail(format!("unsupported format version {version}")));
    }
    let rank = c.u32()?;
    let input = c.extents(rank)?;
    let count = c.u32()?;
    let mut layers = Vec::new();
    let mut blocks = Vec::new();
    for i in 0..count {
        let tag_at = c.pos;
        let layer = match c.u8()? {
            DENSE => LayerSpec::Dense { units: c.u64()? },
            CONV2D => LayerSpec::conv(c.u64()?, c.u64()?, c.u64()?, c.u64()?),
            RELU => LayerSpec::Relu,
            FLATTEN => LayerSpec::Flatten,
            SOFTMAX => LayerSpec::SoftmaxOutput,
            CORRUPTION => {
                let scheme = match c.u8()? {
                    0 => Scheme::Dropout,
                    1 => Scheme::Hybrid,
                    s => return Err(c.fail(format!("unknown scheme {s}"))),
                };
                let structure = match c.u8()? {
                    0 => MaskStructure::Elementwise,
                    1 => MaskStructure::SpatialGrid,
                    2 => MaskStructure::Channel,
                    s => return Err(c.fail(format!("unknown mask structure {s}"))),
                };
                let u = c.f64()?;
                let has_fixed = c.u8()? != 0;
                let fixed = c.f64()?;
                let normalize = c.u8()? != 0;
                LayerSpec::Corruption(CorruptionSpec {
                    scheme,
                    structure,
                    u,
                    fixed_p: has_fixed.then_some(fixed),
                    normalize,
                })
            }
            tag => {
                return Err(CheckpointError {
                    offset: tag_at as u64,
                    reason: format!("layer {i}: unknown kind tag {tag}"),
                })
            }
        };
        if layer.has_params() {
            blocks.push((layers.len(), c.pos, c.block()?, c.block()?));
        }
        layers.push(layer);
    }
    if c.pos != bytes.len() {
        return Err(c.fail(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let mut model = Model::zeroed(&input, layers).map_err(|e| CheckpointError {
        offset: 0,
        reason: e.to_string(),
    })?;
    for (index, at, weight, bias) in blocks {
        model.set_params(index, weight, bias).map_err(|e| CheckpointError {
            offset: at as u64,
            reason: format!("layer {index}: {e}"),
        })?;
    }
    Ok(model)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        offset: e.offset,
        reason: e.reason,
    })
}
