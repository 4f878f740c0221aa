//! Dense numeric kernel with a reverse-mode gradient tape.
//!
//! The free functions here are tape-free conveniences over the same slice
//! kernels the [`Tape`] records.

mod attention;
mod ops;
mod tape;
mod tensor;

pub use attention::AttentionLayout;
pub use ops::{Activation, LAYER_NORM_EPS};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;

use alloc::format;

use crate::error::{Error, Result};

/// `y = x W + b` over the trailing axis of `x`.
pub fn apply_linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::detached();
    let (x, w, b) = (
        tape.leaf(x.clone(), false)?,
        tape.leaf(w.clone(), false)?,
        tape.leaf(b.clone(), false)?,
    );
    let y = tape.linear(x, w, Some(b))?;
    Ok(tape.value(y).clone())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = out.cols();
    for row in out.data_mut().chunks_exact_mut(c) {
        ops::softmax_in_place(row);
    }
    out
}

/// Per-vector normalisation over the trailing axis with eps = 1e-5, then
/// `gamma * xhat + beta`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let d = x.cols();
    if gamma.numel() != d || beta.numel() != d {
        return Err(Error::dim("layer_norm", format!("affine size for width {d}")));
    }
    let (data, _, _) = ops::layer_norm_forward(x.data(), gamma.data(), beta.data(), d);
    Tensor::new(x.shape().to_vec(), data)
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = kind.apply(*v));
    out
}
