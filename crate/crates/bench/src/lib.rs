//! Benchmark-only crate; see `benches/`.

use strokeseg::training::Batch;
use strokeseg::{Dims, Tensor};

/// Deterministic non-constant batch of `n` slices of `side x side` pixels.
pub fn synthetic_batch(n: usize, side: usize) -> Batch {
    let dims = Dims::new(n, 3, side, side);
    let data = (0..dims.numel()).map(|i| ((i * 7919) % 1000) as f32 / 500.0 - 1.0).collect();
    let labels: Vec<u8> = (0..n * side * side).map(|i| ((i / side + i % side) % 3) as u8).collect();
    Batch::new(Tensor::from_vec(dims, data).expect("dims"), labels).expect("labels")
}
