//! Volume ingestion, whitening, fold splitting, slice extraction and the
//! synthetic phantom generator.

mod folds;
mod manifest;
mod nifti;
mod phantom;
mod ptf;
mod slices;
mod whitening;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use folds::{make_folds, FoldPolicy, FoldSplit, NUM_FOLDS};
pub use manifest::{Manifest, Provenance, SubjectRecord, DEFAULT_SEQUENCES};
pub use nifti::{read_nifti, NiftiVolume};
pub use phantom::{generate_phantoms, PhantomSpec};
pub use ptf::{read_ptf, write_ptf, PtfArray};
pub use slices::{extract_slices, pad_for, Padding, SliceSample};
pub use whitening::{apply_whitening, compute_whitening, WhiteningStats, STD_FLOOR};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: not NIfTI-1 ({1})")]
    NotNifti(PathBuf, String),
    #[error("{0}: gzip-compressed volume; decompress first")]
    Compressed(PathBuf),
    #[error("{0}: unsupported {1}")]
    Unsupported(PathBuf, String),
    #[error("{0}: {1}")]
    Ptf(PathBuf, String),
    #[error("manifest line {line}: {detail}")]
    Manifest { line: usize, detail: String },
    #[error("subject {subject}: {detail}")]
    Subject { subject: String, detail: String },
    #[error("folds: {0}")]
    Folds(String),
    #[error("whitening: {0}")]
    Whitening(String),
    #[error("phantom spec: {0}")]
    Phantom(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A stack of axial slices, `depth x height x width`, row-major with the
/// column index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Volume {
    pub fn new(depth: usize, height: usize, width: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == depth * height * width).then_some(Volume {
            depth,
            height,
            width,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.depth, self.height, self.width]
    }

    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[z * n..(z + 1) * n]
    }

    /// Load from a `.nii` or `.ptf` file, chosen by extension.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("nii") => Ok(read_nifti(path)?.volume),
            Some("gz") => Err(DataError::Compressed(path.to_path_buf())),
            _ => {
                let arr = read_ptf(path)?;
                let d = &arr.dims;
                let (depth, height, width) = match d.len() {
                    2 => (1, d[0], d[1]),
                    3 => (d[0], d[1], d[2]),
                    4 if d[0] == 1 => (d[1], d[2], d[3]),
                    _ => {
                        return Err(DataError::Ptf(
                            path.to_path_buf(),
                            format!("dims {d:?} are not a volume"),
                        ))
                    }
                };
                Ok(Volume::new(depth, height, width, arr.data).expect("ptf payload matches dims"))
            }
        }
    }

    pub fn save_ptf(&self, path: &Path) -> Result<(), DataError> {
        write_ptf(
            path,
            &PtfArray {
                dims: vec![self.depth, self.height, self.width],
                data: self.data.clone(),
            },
        )
    }
}
