//! Small neural substrate: GRU cells, affine layers, softmax cross-entropy
//! and ADAM. Everything works on row-major batches (`batch × features`).
//!
//! Back-propagation is written out by hand per layer; the unrolled model
//! graphs in [`crate::models`] chain these layer-local backward passes.

mod adam;
mod affine;
mod gru;
mod loss;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use affine::{affine_forward, AffineParams};
pub use gru::{gru_cell_forward, GruCache, GruParams};
pub use loss::{softmax, softmax_cross_entropy, softmax_cross_entropy_rows};
pub use params::{finite_difference, init_uniform, Parameters};

use ndarray::Array2;

/// Dense row-major matrix. Vectors are `1 × n` rows.
pub type Tensor2<T> = Array2<T>;

pub(crate) fn all_finite<T: crate::Scalar>(t: &Tensor2<T>) -> bool {
    t.iter().all(|v| v.is_finite())
}

#[inline]
pub(crate) fn sigmoid<T: crate::Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
