//! SEQZ: a minimal little-endian tensor container.
//!
//! ```text
//! offset  size       field
//! 0       4          magic "SEQZ"
//! 4       2          format version (u16 LE, currently 1)
//! 6       1          dtype code (0 = binary32)
//! 7       1          rank (1..=5)
//! 8       8·rank     extents (u64 LE each)
//! ...     4·Π extents payload, row-major binary32 LE
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::numerics::tensor::MAX_RANK;
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"SEQZ";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SeqzError {
    #[error("not a SEQZ file: magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported SEQZ version {0}")]
    BadVersion(u16),
    #[error("unsupported SEQZ dtype code {0}")]
    BadDtype(u8),
    #[error("SEQZ rank {0} outside 1..=5")]
    BadRank(u8),
    #[error("SEQZ header truncated: need {expected} bytes, file has {actual}")]
    TruncatedHeader { expected: usize, actual: usize },
    #[error("SEQZ payload truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("SEQZ payload has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("SEQZ extents overflow")]
    Overflow,
}

pub fn encode(tensor: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * tensor.rank() + tensor.nbytes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(tensor.rank() as u8);
    for &e in tensor.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor<f32>, SeqzError> {
    let need = |n: usize| -> Result<(), SeqzError> {
        if bytes.len() < n {
            Err(SeqzError::TruncatedHeader {
                expected: n,
                actual: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(4)?;
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(SeqzError::BadMagic(magic));
    }
    need(8)?;
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(SeqzError::BadVersion(version));
    }
    if bytes[6] != DTYPE_F32 {
        return Err(SeqzError::BadDtype(bytes[6]));
    }
    let rank = bytes[7];
    if rank == 0 || rank as usize > MAX_RANK {
        return Err(SeqzError::BadRank(rank));
    }
    let header = 8 + 8 * rank as usize;
    need(header)?;
    let mut shape = Vec::with_capacity(rank as usize);
    for i in 0..rank as usize {
        let raw: [u8; 8] = bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap();
        shape.push(usize::try_from(u64::from_le_bytes(raw)).map_err(|_| SeqzError::Overflow)?);
    }
    let expected = shape
        .iter()
        .try_fold(4usize, |acc, &e| acc.checked_mul(e))
        .ok_or(SeqzError::Overflow)?;
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(SeqzError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(SeqzError::TrailingBytes(payload.len() - expected));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor::from_vec(&shape, data).expect("extents checked"))
}

pub fn write_seqz(path: impl AsRef<Path>, tensor: &Tensor<f32>) -> crate::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(tensor))?;
    Ok(())
}

pub fn read_seqz(path: impl AsRef<Path>) -> crate::Result<Tensor<f32>> {
    let bytes = fs::read(path)?;
    Ok(decode(&bytes)?)
}
