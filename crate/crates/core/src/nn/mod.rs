//! Dense tensor engine: forward kernels, reverse-mode gradients for
//! sequential networks, losses, Adam and checkpoints.

mod adam;
mod checkpoint;
mod network;
pub mod gradcheck;
pub mod ops;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{parse_params, read_params, write_params};
pub use network::{he_normal, Layer, Network, Param, ParamId, ParamSet, Tape};
pub use tensor::{Scalar, Tensor};

use crate::data::{EncodedTensor, CHANNELS, GRID};

/// Stacks encoded inputs into one `n x 26 x 26 x 3` batch.
pub fn stack_inputs<'a>(items: impl IntoIterator<Item = &'a EncodedTensor>) -> Tensor<f32> {
    let mut data = Vec::new();
    let mut n = 0;
    for t in items {
        data.extend_from_slice(t.as_slice());
        n += 1;
    }
    Tensor::new(vec![n, GRID, GRID, CHANNELS], data).expect("encoded tensors have fixed size")
}
