//! The IDX container used by the MNIST distribution.
//!
//! Layout: a big-endian `u32` magic whose third byte is the element type and
//! fourth the rank, one big-endian `u32` per dimension, then the row-major
//! payload. Only unsigned-byte files of rank 1 (labels) and 3 (images) are read.

use std::path::Path;

use prunescope_core::Matrix;

use crate::error::{AppError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdxError {
    #[error("bad magic number ({}), expected 0x00000803 or 0x00000801", show_magic(.found))]
    BadMagic { found: Option<u32> },
    #[error("truncated header: {expected} bytes needed, {actual} present")]
    TruncatedHeader { expected: usize, actual: usize },
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{actual} bytes present but the header describes {expected}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("dimensions {dims:?} overflow the addressable size")]
    DimensionOverflow { dims: Vec<u32> },
}

fn show_magic(found: &Option<u32>) -> String {
    match found {
        Some(m) => format!("{m:#010x}"),
        None => "file shorter than 4 bytes".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn images(count: usize, rows: usize, cols: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), count * rows * cols);
        Self { dims: vec![count, rows, cols], data }
    }

    pub fn labels(data: Vec<u8>) -> Self {
        Self { dims: vec![data.len()], data }
    }

    pub fn magic(&self) -> u32 {
        0x0800 | self.dims.len() as u32
    }

    pub fn count(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    /// Bytes per item, e.g. `rows * cols` for an image file.
    pub fn item_len(&self) -> usize {
        self.dims[1..].iter().product()
    }

    /// One row per item, pixel values scaled to `[0, 1]`.
    pub fn to_unit_matrix(&self) -> Matrix {
        let values = self.data.iter().map(|&b| b as f64 / 255.0).collect();
        Matrix::from_vec(self.count(), self.item_len(), values).expect("payload length was validated")
    }
}

pub fn parse_idx(bytes: &[u8]) -> std::result::Result<IdxArray, IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::BadMagic { found: None });
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    let rank = match magic {
        IMAGE_MAGIC => 3,
        LABEL_MAGIC => 1,
        other => return Err(IdxError::BadMagic { found: Some(other) }),
    };
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(IdxError::TruncatedHeader { expected: header, actual: bytes.len() });
    }
    let raw: Vec<u32> = (0..rank)
        .map(|d| u32::from_be_bytes(bytes[4 + 4 * d..8 + 4 * d].try_into().unwrap()))
        .collect();
    let payload = raw
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|n| n.checked_add(header).map(|_| n))
        .ok_or_else(|| IdxError::DimensionOverflow { dims: raw.clone() })?;
    let actual = bytes.len() - header;
    if actual < payload {
        return Err(IdxError::Truncated { expected: payload, actual });
    }
    if actual > payload {
        return Err(IdxError::TrailingBytes { expected: payload, actual });
    }
    Ok(IdxArray { dims: raw.iter().map(|&d| d as usize).collect(), data: bytes[header..].to_vec() })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len());
    out.extend_from_slice(&array.magic().to_be_bytes());
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    let bytes = crate::error::read(path)?;
    parse_idx(&bytes).map_err(|source| AppError::Idx { path: path.to_path_buf(), source })
}

pub fn write_idx(path: impl AsRef<Path>, array: &IdxArray) -> Result<()> {
    crate::error::write(path.as_ref(), &encode_idx(array))
}
