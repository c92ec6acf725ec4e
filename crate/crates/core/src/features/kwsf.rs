//! KWSF feature files.
//!
//! Layout, all little-endian: magic `KWSF`, version `u16`, kind `u16`,
//! rows `u32`, cols `u32`, then `rows × cols` `f32` values in row-major order.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{FeatureKind, FeatureMatrix};
use crate::matrix::Matrix;

pub const MAGIC: [u8; 4] = *b"KWSF";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum KwsfError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed KWSF data: {0}")]
    Format(String),
}

/// Decoded file contents. `kind` is kept as the raw code so that matrices
/// not produced by a front-end (e.g. external text features) can be stored.
#[derive(Debug, Clone, PartialEq)]
pub struct KwsfFile {
    pub kind: u16,
    pub matrix: Matrix,
}

impl KwsfFile {
    pub fn feature_kind(&self) -> Option<FeatureKind> {
        FeatureKind::from_code(self.kind)
    }
}

pub fn encode(kind: u16, matrix: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * matrix.as_slice().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
    for &v in matrix.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<KwsfFile, KwsfError> {
    if bytes.len() < HEADER_LEN {
        return Err(KwsfError::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(KwsfError::Format("bad magic".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let version = u16_at(4);
    if version != VERSION {
        return Err(KwsfError::Format(format!("unsupported version {version}")));
    }
    let kind = u16_at(6);
    let (rows, cols) = (u32_at(8), u32_at(12));
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| KwsfError::Format("dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(KwsfError::Format(format!(
            "{rows}x{cols} needs {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(KwsfFile {
        kind,
        matrix: Matrix::from_vec(rows, cols, data),
    })
}

pub fn write_features<W: Write>(mut w: W, features: &FeatureMatrix) -> Result<(), KwsfError> {
    w.write_all(&encode(features.kind().code(), features.matrix()))?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<KwsfFile, KwsfError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Writes atomically through a sibling temp file.
pub fn save(path: &Path, kind: u16, matrix: &Matrix) -> Result<(), KwsfError> {
    crate::io_util::write_atomic(path, &encode(kind, matrix))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<KwsfFile, KwsfError> {
    decode(&fs::read(path)?)
}
