use std::sync::Arc;

use crate::data::SliceSample;
use crate::tensor::{Tensor, TensorError};

/// Stacked slices: `B x T x H x W` images and `B * H * W` labels.
#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Arc<[u8]>,
}

impl Batch {
    pub fn new(images: Tensor, labels: Vec<u8>) -> Result<Self, TensorError> {
        let d = images.dims();
        if labels.len() != d.batch() * d.plane() {
            return Err(TensorError::Shape {
                op: "batch",
                detail: format!("{} labels for images {d}", labels.len()),
            });
        }
        Ok(Batch {
            images,
            labels: labels.into(),
        })
    }

    pub fn from_samples(samples: &[&SliceSample]) -> Result<Self, TensorError> {
        let images = Tensor::stack(&samples.iter().map(|s| &s.image).collect::<Vec<_>>())?;
        let labels = samples.iter().flat_map(|s| s.label.iter().copied()).collect();
        Self::new(images, labels)
    }

    pub fn len(&self) -> usize {
        self.images.dims().batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Binary `B x 1 x H x W` mask of one class.
    pub fn class_mask(&self, class: u8) -> Tensor {
        let d = self.images.dims();
        let data = self.labels.iter().map(|&l| if l == class { 1.0 } else { 0.0 }).collect();
        Tensor::from_vec(crate::tensor::Dims::new(d.batch(), 1, d.height(), d.width()), data).expect("dims")
    }
}
