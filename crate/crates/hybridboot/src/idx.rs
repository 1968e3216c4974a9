//! IDX files (the MNIST distribution format): big-endian headers followed by
//! raw bytes. Gzipped files are decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use hybridboot_core::data::Dataset;
use hybridboot_core::Tensor;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Position and cause of a malformed IDX buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxError {
    pub offset: u64,
    pub reason: String,
}

impl IdxError {
    fn new(offset: usize, reason: impl Into<String>) -> Self {
        Self {
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    fn at(self, path: &Path) -> Error {
        Error::Format {
            path: path.to_path_buf(),
            offset: self.offset,
            reason: self.reason,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> std::result::Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| IdxError::new(bytes.len(), format!("truncated header, expected 4 bytes at {offset}")))
}

fn read_magic(bytes: &[u8], expected: u32) -> std::result::Result<(), IdxError> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(IdxError::new(0, format!("bad magic {magic:#010x}, expected {expected:#010x}")));
    }
    Ok(())
}

pub fn parse_images(bytes: &[u8]) -> std::result::Result<IdxImages, IdxError> {
    read_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(IdxError::new(
            bytes.len(),
            format!("truncated pixel data: {need} bytes declared, {} present", body.len()),
        ));
    }
    if body.len() > need {
        return Err(IdxError::new(16 + need, "trailing bytes after pixel data"));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> std::result::Result<Vec<u8>, IdxError> {
    read_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(IdxError::new(
            bytes.len(),
            format!("truncated labels: {count} declared, {} present", body.len()),
        ));
    }
    if body.len() > count {
        return Err(IdxError::new(8 + count, "trailing bytes after labels"));
    }
    Ok(body.to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// File contents, gunzipped when the file starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Pixels become `1×rows×cols` examples scaled to `[0, 1]` by `/255`; the
/// class count is one past the largest label.
pub fn dataset_from_idx(images: &IdxImages, labels: &[u8]) -> std::result::Result<Dataset, IdxError> {
    if images.count != labels.len() {
        return Err(IdxError::new(
            4,
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    if images.count == 0 {
        return Err(IdxError::new(4, "no examples"));
    }
    let data = images.pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let examples = Tensor::new(vec![images.count, 1, images.rows, images.cols], data)
        .map_err(|e| IdxError::new(16, e.to_string()))?;
    let classes = labels.iter().copied().max().unwrap() as usize + 1;
    let labels = labels.iter().map(|&l| l as usize).collect();
    Dataset::new(examples, labels, classes).map_err(|e| IdxError::new(8, e.to_string()))
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = parse_images(&read_maybe_gz(ip)?).map_err(|e| e.at(ip))?;
    let labels = parse_labels(&read_maybe_gz(lp)?).map_err(|e| e.at(lp))?;
    dataset_from_idx(&images, &labels).map_err(|e| e.at(lp))
}
