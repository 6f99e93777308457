//! Adversarially trained three-class (background / penumbra / core)
//! segmentation of multisequence stroke MRI slices.
//!
//! The crate is self-contained: [`autodiff`] provides the tensor operations
//! and reverse-mode gradients, [`networks`] builds the encoder-decoder
//! segmenter and the shallow discriminators, [`training`] runs the
//! five-phase schedule, [`data`] reads volumes and builds folds, and
//! [`evaluation`] computes metrics, overlays and reports.

pub mod archive;
pub mod autodiff;
pub mod data;
pub mod evaluation;
pub mod networks;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod training;

pub use autodiff::{Graph, Var};
pub use params::{GradMap, ParamStore};
pub use tensor::{Dims, Tensor, TensorError};
