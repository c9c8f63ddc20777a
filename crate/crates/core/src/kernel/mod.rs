//! Dense numeric layer: matrices, a gradient tape for the transformer block,
//! Adam and a finite-difference gradient checker.

mod block;
pub mod gradcheck;
mod matrix;
mod params;
mod tape;

pub use block::{forward_block, BlockParams};
pub use matrix::Matrix;
pub(crate) use params::ByteReader;
pub use params::{AdamConfig, ParamId, ParamStore};
pub use tape::{gelu, softplus, Gradients, Tape, Var, LAYER_NORM_EPS};
