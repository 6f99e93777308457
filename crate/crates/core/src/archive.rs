//! Named-block binary container used for checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "ASEGCKPT"
//! version   u32      1
//! sha256    32 bytes digest of every byte that follows
//! count     u32      number of blocks
//! block*    name_len u32, name (UTF-8), dtype u8, ndim u8, dims u32 x ndim,
//!           payload (numel x dtype size)
//! ```
//!
//! dtype codes: 0 = f32, 1 = u8, 2 = u64, 3 = f64.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tensor::{Dims, Tensor};

pub const MAGIC: &[u8; 8] = b"ASEGCKPT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 32;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a checkpoint archive (bad magic)")]
    BadMagic,
    #[error("unsupported archive version {0} (expected {VERSION})")]
    Version(u32),
    #[error("integrity hash mismatch: file is corrupt or truncated")]
    Integrity,
    #[error("malformed archive: {0}")]
    Malformed(String),
    #[error("missing block `{0}`")]
    Missing(String),
    #[error("block `{name}` has unexpected type or shape: {detail}")]
    Type { name: String, detail: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlockData {
    F32(Tensor),
    Bytes(Vec<u8>),
    U64(Vec<u64>),
    F64(Vec<f64>),
}

/// Ordered collection of named blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    blocks: Vec<(String, BlockData)>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, data: BlockData) {
        self.blocks.push((name.into(), data));
    }

    pub fn blocks(&self) -> &[(String, BlockData)] {
        &self.blocks
    }

    pub fn get(&self, name: &str) -> Option<&BlockData> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, ArchiveError> {
        match self.get(name) {
            Some(BlockData::F32(t)) => Ok(t),
            Some(_) => Err(type_err(name, "expected f32 tensor")),
            None => Err(ArchiveError::Missing(name.into())),
        }
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8], ArchiveError> {
        match self.get(name) {
            Some(BlockData::Bytes(b)) => Ok(b),
            Some(_) => Err(type_err(name, "expected bytes")),
            None => Err(ArchiveError::Missing(name.into())),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64], ArchiveError> {
        match self.get(name) {
            Some(BlockData::U64(v)) => Ok(v),
            Some(_) => Err(type_err(name, "expected u64 values")),
            None => Err(ArchiveError::Missing(name.into())),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64], ArchiveError> {
        match self.get(name) {
            Some(BlockData::F64(v)) => Ok(v),
            Some(_) => Err(type_err(name, "expected f64 values")),
            None => Err(ArchiveError::Missing(name.into())),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        body.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for (name, data) in &self.blocks {
            body.extend_from_slice(&(name.len() as u32).to_le_bytes());
            body.extend_from_slice(name.as_bytes());
            match data {
                BlockData::F32(t) => {
                    body.push(0);
                    body.push(4);
                    for d in t.dims().0 {
                        body.extend_from_slice(&(d as u32).to_le_bytes());
                    }
                    for v in t.data() {
                        body.extend_from_slice(&v.to_le_bytes());
                    }
                }
                BlockData::Bytes(b) => {
                    body.extend_from_slice(&[1, 1]);
                    body.extend_from_slice(&(b.len() as u32).to_le_bytes());
                    body.extend_from_slice(b);
                }
                BlockData::U64(v) => {
                    body.extend_from_slice(&[2, 1]);
                    body.extend_from_slice(&(v.len() as u32).to_le_bytes());
                    v.iter().for_each(|x| body.extend_from_slice(&x.to_le_bytes()));
                }
                BlockData::F64(v) => {
                    body.extend_from_slice(&[3, 1]);
                    body.extend_from_slice(&(v.len() as u32).to_le_bytes());
                    v.iter().for_each(|x| body.extend_from_slice(&x.to_le_bytes()));
                }
            }
        }
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&Sha256::digest(&body));
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArchiveError> {
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(ArchiveError::Integrity);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(ArchiveError::Version(version));
        }
        let body = &bytes[HEADER_LEN..];
        if Sha256::digest(body).as_slice() != &bytes[12..HEADER_LEN] {
            return Err(ArchiveError::Integrity);
        }
        let mut r = Reader { buf: body, pos: 0 };
        let count = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| ArchiveError::Malformed("block name is not UTF-8".into()))?;
            let dtype = r.u8()?;
            let ndim = r.u8()? as usize;
            let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let numel: usize = dims.iter().product();
            let data = match (dtype, ndim) {
                (0, 4) => {
                    let raw = r.take(numel * 4)?;
                    let values = raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect();
                    let t = Tensor::from_vec(Dims::new(dims[0], dims[1], dims[2], dims[3]), values)
                        .map_err(|e| ArchiveError::Malformed(e.to_string()))?;
                    BlockData::F32(t)
                }
                (1, 1) => BlockData::Bytes(r.take(numel)?.to_vec()),
                (2, 1) => BlockData::U64(
                    r.take(numel * 8)?
                        .chunks_exact(8)
                        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                ),
                (3, 1) => BlockData::F64(
                    r.take(numel * 8)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                ),
                _ => {
                    return Err(ArchiveError::Malformed(format!(
                        "block `{name}`: dtype {dtype} with {ndim} dims"
                    )))
                }
            };
            blocks.push((name, data));
        }
        if r.pos != body.len() {
            return Err(ArchiveError::Malformed("trailing bytes".into()));
        }
        Ok(Archive { blocks })
    }

    pub fn save(&self, path: &Path) -> Result<(), ArchiveError> {
        fs::write(path, self.to_bytes()).map_err(|source| ArchiveError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ArchiveError> {
        let bytes = fs::read(path).map_err(|source| ArchiveError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Archive::from_bytes(&bytes)
    }
}

fn type_err(name: &str, detail: &str) -> ArchiveError {
    ArchiveError::Type {
        name: name.into(),
        detail: detail.into(),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArchiveError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ArchiveError::Malformed("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ArchiveError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ArchiveError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Archive {
        let mut a = Archive::new();
        let t = Tensor::from_vec(Dims::new(1, 2, 1, 2), vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5]).unwrap();
        a.push("seg/w", BlockData::F32(t));
        a.push("meta/config", BlockData::Bytes(b"epochs=3\n".to_vec()));
        a.push("meta/epoch", BlockData::U64(vec![7]));
        a.push("meta/metric", BlockData::F64(vec![0.25, f64::EPSILON]));
        a
    }

    #[test]
    fn round_trip_is_exact() {
        let a = sample();
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        let b = Archive::from_bytes(&bytes).unwrap();
        assert_eq!(b.to_bytes(), bytes);
        assert_eq!(b.u64s("meta/epoch").unwrap(), &[7]);
        assert_eq!(b.tensor("seg/w").unwrap().data()[1].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn truncation_and_tampering_are_detected() {
        let bytes = sample().to_bytes();
        for cut in [bytes.len() - 1, 50, 20] {
            assert!(matches!(Archive::from_bytes(&bytes[..cut]), Err(ArchiveError::Integrity)));
        }
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert!(matches!(Archive::from_bytes(&flipped), Err(ArchiveError::Integrity)));
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 2;
        assert!(matches!(Archive::from_bytes(&wrong_version), Err(ArchiveError::Version(2))));
        assert!(matches!(Archive::from_bytes(b"NOTACKPT...."), Err(ArchiveError::BadMagic)));
    }

    #[test]
    fn typed_accessors_check_kind() {
        let a = sample();
        assert!(a.tensor("meta/epoch").is_err());
        assert!(matches!(a.bytes("nope"), Err(ArchiveError::Missing(_))));
    }
}
