//! Minimal single-file NIfTI-1 reader: uncompressed `.nii`, int16 / float32
//! / float64 voxels, either byte order, at most one volume.

use std::fs;
use std::path::Path;

use super::{io_err, DataError, Volume};

const HEADER_SIZE: usize = 348;
const MAGIC: &[u8; 4] = b"n+1\0";

const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct NiftiVolume {
    pub volume: Volume,
    /// Voxel spacing along x, y, z (`pixdim[1..=3]`).
    pub voxel_dims: [f32; 3],
}

#[derive(Clone, Copy)]
struct Reader<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Reader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        if self.big_endian {
            i16::from_be_bytes(b)
        } else {
            i16::from_le_bytes(b)
        }
    }

    fn arr4(&self, off: usize) -> [u8; 4] {
        self.bytes[off..off + 4].try_into().expect("4 bytes")
    }

    fn i32(&self, off: usize) -> i32 {
        if self.big_endian {
            i32::from_be_bytes(self.arr4(off))
        } else {
            i32::from_le_bytes(self.arr4(off))
        }
    }

    fn f32(&self, off: usize) -> f32 {
        if self.big_endian {
            f32::from_be_bytes(self.arr4(off))
        } else {
            f32::from_le_bytes(self.arr4(off))
        }
    }

    fn f64(&self, off: usize) -> f64 {
        let b: [u8; 8] = self.bytes[off..off + 8].try_into().expect("8 bytes");
        if self.big_endian {
            f64::from_be_bytes(b)
        } else {
            f64::from_le_bytes(b)
        }
    }
}

pub fn read_nifti(path: &Path) -> Result<NiftiVolume, DataError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse(&bytes).map_err(|e| match e {
        Failure::NotNifti(d) => DataError::NotNifti(path.to_path_buf(), d),
        Failure::Compressed => DataError::Compressed(path.to_path_buf()),
        Failure::Unsupported(d) => DataError::Unsupported(path.to_path_buf(), d),
    })
}

enum Failure {
    NotNifti(String),
    Compressed,
    Unsupported(String),
}

fn parse(bytes: &[u8]) -> Result<NiftiVolume, Failure> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        return Err(Failure::Compressed);
    }
    if bytes.len() < HEADER_SIZE {
        return Err(Failure::NotNifti(format!("{} bytes, header needs {HEADER_SIZE}", bytes.len())));
    }
    let le = Reader {
        bytes,
        big_endian: false,
    };
    let r = if le.i32(0) == HEADER_SIZE as i32 {
        le
    } else if i32::from_be_bytes(le.arr4(0)) == HEADER_SIZE as i32 {
        Reader {
            bytes,
            big_endian: true,
        }
    } else {
        return Err(Failure::NotNifti(format!("sizeof_hdr is {}", le.i32(0))));
    };
    if &bytes[344..348] != MAGIC {
        return Err(Failure::NotNifti(format!("magic {:?}", &bytes[344..348])));
    }

    let ndim = r.i16(40);
    if !(1..=4).contains(&ndim) {
        return Err(Failure::Unsupported(format!("dimension count {ndim}")));
    }
    let mut dim = [1usize; 4];
    for (i, d) in dim.iter_mut().enumerate().take(ndim as usize) {
        let v = r.i16(42 + 2 * i as usize);
        if v < 1 {
            return Err(Failure::NotNifti(format!("dim[{}] = {v}", i + 1)));
        }
        *d = v as usize;
    }
    if dim[3] != 1 {
        return Err(Failure::Unsupported(format!("4-D series with {} volumes", dim[3])));
    }
    let datatype = r.i16(70);
    let size = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(Failure::Unsupported(format!("datatype code {other}"))),
    };
    let voxel_dims = [r.f32(80), r.f32(84), r.f32(88)];
    let offset = r.f32(108);
    if !(offset >= HEADER_SIZE as f32) || offset.fract() != 0.0 {
        return Err(Failure::NotNifti(format!("vox_offset {offset}")));
    }
    let offset = offset as usize;
    let mut slope = r.f32(112);
    let inter = r.f32(116);
    if slope == 0.0 || !slope.is_finite() {
        slope = 1.0;
    }
    let inter = if inter.is_finite() { inter } else { 0.0 };

    let [nx, ny, nz, _] = dim;
    let n = nx * ny * nz;
    let need = offset + n * size;
    if bytes.len() < need {
        return Err(Failure::NotNifti(format!("{} bytes, voxel data needs {need}", bytes.len())));
    }
    let raw = |i: usize| -> f64 {
        let off = offset + i * size;
        match datatype {
            DT_INT16 => r.i16(off) as f64,
            DT_FLOAT32 => r.f32(off) as f64,
            _ => r.f64(off),
        }
    };
    let (slope, inter) = (slope as f64, inter as f64);
    let data = (0..n).map(|i| (raw(i) * slope + inter) as f32).collect();
    Ok(NiftiVolume {
        volume: Volume::new(nz, ny, nx, data).expect("length matches"),
        voxel_dims,
    })
}
