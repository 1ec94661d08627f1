//! Matrix container formats.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! offset  size      field
//! 0       4         magic  b"VSMX"
//! 4       1         dtype  4 = f32, 8 = f64
//! 5       1         ndim   1 or 2
//! 6       2         reserved, zero
//! 8       8*ndim    dims (u64 each)
//! ...     dtype*N   values, row-major
//! ```
//!
//! A one-dimensional blob is read as a single row. The text form is
//! line-delimited JSON, one array of numbers per row.

use std::io::Write;

use thiserror::Error;

use crate::objectives::{EmbeddingMatrix, LossError};

pub const MAGIC: &[u8; 4] = b"VSMX";

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("truncated container: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("bad magic {0:?}")]
    Magic([u8; 4]),
    #[error("unsupported dtype byte {0}")]
    Dtype(u8),
    #[error("unsupported rank {0}")]
    Rank(u8),
    #[error("reserved header bytes are not zero")]
    Reserved,
    #[error("{0} trailing bytes after the data")]
    Trailing(usize),
    #[error("dimension overflow")]
    Overflow,
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Matrix(#[from] LossError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

pub fn read_matrix(bytes: &[u8]) -> Result<EmbeddingMatrix, TensorIoError> {
    let need = |n: usize| {
        if bytes.len() < n {
            Err(TensorIoError::Truncated {
                need: n,
                have: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(8)?;
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(TensorIoError::Magic(magic));
    }
    let dtype = match bytes[4] {
        4 => Dtype::F32,
        8 => Dtype::F64,
        other => return Err(TensorIoError::Dtype(other)),
    };
    let ndim = bytes[5];
    if !(1..=2).contains(&ndim) {
        return Err(TensorIoError::Rank(ndim));
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(TensorIoError::Reserved);
    }
    let header = 8 + 8 * ndim as usize;
    need(header)?;
    let dims: Vec<usize> = bytes[8..header]
        .chunks_exact(8)
        .map(|c| usize::try_from(u64::from_le_bytes(c.try_into().expect("8 bytes"))).map_err(|_| TensorIoError::Overflow))
        .collect::<Result<_, _>>()?;
    let (rows, cols) = if ndim == 1 { (1, dims[0]) } else { (dims[0], dims[1]) };
    let count = rows.checked_mul(cols).ok_or(TensorIoError::Overflow)?;
    let payload = count.checked_mul(dtype.width()).ok_or(TensorIoError::Overflow)?;
    let total = header.checked_add(payload).ok_or(TensorIoError::Overflow)?;
    need(total)?;
    if bytes.len() > total {
        return Err(TensorIoError::Trailing(bytes.len() - total));
    }
    let body = &bytes[header..total];
    let data: Vec<f64> = match dtype {
        Dtype::F32 => body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect(),
        Dtype::F64 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Ok(EmbeddingMatrix::new(rows, cols, data)?)
}

pub fn write_matrix<W: Write>(m: &EmbeddingMatrix, dtype: Dtype, mut out: W) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[dtype.width() as u8, 2, 0, 0])?;
    out.write_all(&(m.rows() as u64).to_le_bytes())?;
    out.write_all(&(m.cols() as u64).to_le_bytes())?;
    for &x in m.data() {
        match dtype {
            Dtype::F32 => out.write_all(&(x as f32).to_le_bytes())?,
            Dtype::F64 => out.write_all(&x.to_le_bytes())?,
        }
    }
    Ok(())
}

pub fn matrix_to_bytes(m: &EmbeddingMatrix, dtype: Dtype) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + m.data().len() * dtype.width());
    write_matrix(m, dtype, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// One JSON array of numbers per non-blank line.
pub fn read_matrix_jsonl(text: &str) -> Result<EmbeddingMatrix, TensorIoError> {
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str::<Vec<f64>>(l).map_err(|source| TensorIoError::Json { line: i + 1, source }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EmbeddingMatrix::from_rows(&rows)?)
}

/// Picks the binary reader when the magic matches, JSON lines otherwise.
pub fn read_matrix_auto(bytes: &[u8]) -> Result<EmbeddingMatrix, TensorIoError> {
    if bytes.starts_with(MAGIC) {
        read_matrix(bytes)
    } else {
        read_matrix_jsonl(&String::from_utf8_lossy(bytes))
    }
}
