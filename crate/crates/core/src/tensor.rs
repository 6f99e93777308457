//! Dense four-dimensional `f32` tensors in (batch, channel, height, width) order.

use std::fmt;

use thiserror::Error;

/// Shape or value errors raised by tensor constructors and graph operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid argument to {op}: {detail}")]
    Invalid { op: &'static str, detail: String },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Invalid {
            op,
            detail: detail.into(),
        }
    }
}

/// Dimensions of a [`Tensor`]: batch, channels, height, width.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims(pub [usize; 4]);

impl Dims {
    pub const fn new(b: usize, c: usize, h: usize, w: usize) -> Self {
        Dims([b, c, h, w])
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn batch(&self) -> usize {
        self.0[0]
    }

    pub fn channels(&self) -> usize {
        self.0[1]
    }

    pub fn height(&self) -> usize {
        self.0[2]
    }

    pub fn width(&self) -> usize {
        self.0[3]
    }

    pub fn plane(&self) -> usize {
        self.0[2] * self.0[3]
    }
}

impl fmt::Debug for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [b, c, h, w] = self.0;
        write!(f, "{b}x{c}x{h}x{w}")
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Row-major dense tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    dims: Dims,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(dims: Dims) -> Self {
        Tensor {
            dims,
            data: vec![0.0; dims.numel()],
        }
    }

    pub fn full(dims: Dims, value: f32) -> Self {
        Tensor {
            dims,
            data: vec![value; dims.numel()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<f32>) -> Result<Self, TensorError> {
        if data.len() != dims.numel() {
            return Err(TensorError::shape(
                "tensor",
                format!("{} values for dims {dims}", data.len()),
            ));
        }
        Ok(Tensor { dims, data })
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            dims: Dims::new(1, 1, 1, 1),
            data: vec![value],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Reinterpret the same data under new dims with equal element count.
    pub fn reshape(self, dims: Dims) -> Result<Self, TensorError> {
        Tensor::from_vec(dims, self.data)
    }

    /// Contiguous slice of one (batch, channel) plane.
    pub fn plane(&self, b: usize, c: usize) -> &[f32] {
        let p = self.dims.plane();
        let start = (b * self.dims.channels() + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f32] {
        let p = self.dims.plane();
        let start = (b * self.dims.channels() + c) * p;
        &mut self.data[start..start + p]
    }

    /// Contiguous slice of all channels of sample `b`.
    pub fn sample(&self, b: usize) -> &[f32] {
        let n = self.dims.channels() * self.dims.plane();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.dims.channels() * self.dims.plane();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f32 {
        let [_, cc, h, w] = self.dims.0;
        self.data[((b * cc + c) * h + y) * w + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// Stack equally-shaped single-sample tensors along the batch axis.
    pub fn stack(items: &[&Tensor]) -> Result<Self, TensorError> {
        let first = items
            .first()
            .ok_or_else(|| TensorError::invalid("stack", "no tensors"))?;
        let [_, c, h, w] = first.dims.0;
        let mut data = Vec::with_capacity(items.len() * c * h * w);
        let mut batch = 0;
        for t in items {
            let [b, tc, th, tw] = t.dims.0;
            if (tc, th, tw) != (c, h, w) {
                return Err(TensorError::shape(
                    "stack",
                    format!("{} vs {}", t.dims, first.dims),
                ));
            }
            batch += b;
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec(Dims::new(batch, c, h, w), data)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f32> = self.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("dims", &self.dims)
            .field("head", &preview)
            .finish()
    }
}
