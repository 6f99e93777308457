//! Portable tensor format: `"PTNS"`, u32 version, u8 dtype (0 = f32),
//! u8 ndim, ndim x u32 dims, then the row-major payload. All integers and
//! floats little-endian.

use std::fs;
use std::path::Path;

use super::{io_err, DataError};

pub const MAGIC: &[u8; 4] = b"PTNS";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct PtfArray {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl PtfArray {
    pub fn encoded_len(&self) -> usize {
        4 + 4 + 1 + 1 + 4 * self.dims.len() + 4 * self.data.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, String> {
        if self.dims.is_empty() || self.dims.len() > 4 {
            return Err(format!("{} dims; 1 to 4 supported", self.dims.len()));
        }
        if self.dims.iter().product::<usize>() != self.data.len() {
            return Err(format!("dims {:?} do not match {} values", self.dims, self.data.len()));
        }
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            let d = u32::try_from(d).map_err(|_| format!("dim {d} exceeds u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < 10 || &bytes[..4] != MAGIC {
            return Err("bad magic".into());
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(format!("version {version}, expected {VERSION}"));
        }
        if bytes[8] != DTYPE_F32 {
            return Err(format!("dtype {} unsupported", bytes[8]));
        }
        let ndim = bytes[9] as usize;
        if ndim == 0 || ndim > 4 {
            return Err(format!("ndim {ndim} out of range"));
        }
        let header = 10 + 4 * ndim;
        if bytes.len() < header {
            return Err("truncated header".into());
        }
        let dims: Vec<usize> = bytes[10..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let numel: usize = dims.iter().product();
        let payload = &bytes[header..];
        if payload.len() != 4 * numel {
            return Err(format!(
                "payload length {} does not match dims {dims:?} ({} bytes expected)",
                payload.len(),
                4 * numel
            ));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(PtfArray { dims, data })
    }
}

pub fn write_ptf(path: &Path, array: &PtfArray) -> Result<(), DataError> {
    let bytes = array.to_bytes().map_err(|e| DataError::Ptf(path.to_path_buf(), e))?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_ptf(path: &Path) -> Result<PtfArray, DataError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    PtfArray::from_bytes(&bytes).map_err(|e| DataError::Ptf(path.to_path_buf(), e))
}
