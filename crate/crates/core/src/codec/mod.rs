//! Latent codecs.
//!
//! [`MetaAE`] is the trainable transformer encoder/decoder with an error
//! token whose head predicts reconstruction error. [`LinearOrthoCodec`] packs
//! principal-direction coefficients in variance order and serves as an exact,
//! analytically progressive reference.

mod checkpoint;
mod dataset;
mod linear;
mod meta;

pub use checkpoint::AnyCodec;
pub use dataset::{Dataset, LatentSample};
pub use linear::{fit_linear_oracle, power_eigen, LinearOrthoCodec, SymmetricEigen};
pub use meta::{BatchLoss, LossReport, MetaAE, MetaAEConfig, TrainOptions};

use sha2::{Digest, Sha256};

use crate::kernel::Matrix;
use crate::repr::OrderedRepr;
use crate::Result;

/// Reconstruction at one level plus the predicted error and quality.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub z_hat: Matrix,
    pub e_hat: f64,
    pub q: f64,
}

impl DecodeResult {
    pub fn new(z_hat: Matrix, e_hat: f64) -> Self {
        DecodeResult {
            z_hat,
            e_hat,
            q: quality(e_hat),
        }
    }
}

/// Bounded quality score `exp(-e)`.
pub fn quality(e_hat: f64) -> f64 {
    (-e_hat).exp()
}

/// Mean squared error over every entry.
///
/// # Panics
/// If the shapes differ.
pub fn true_error(z_hat: &Matrix, z: &Matrix) -> f64 {
    assert_eq!(z_hat.shape(), z.shape(), "true_error shape mismatch");
    let n = z.data().len();
    z_hat
        .data()
        .iter()
        .zip(z.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n as f64
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Common surface of both codecs as used by the control loop.
pub trait Codec: Send + Sync {
    fn n_tokens(&self) -> usize;
    fn latent_width(&self) -> usize;
    fn repr_width(&self) -> usize;
    fn boundaries(&self) -> &[usize];

    fn levels(&self) -> usize {
        self.boundaries().len()
    }

    fn encode(&self, z: &LatentSample) -> Result<OrderedRepr>;

    /// Decodes a full-length zero-padded representation at `level`.
    fn decode(&self, masked: &Matrix, level: usize) -> Result<DecodeResult>;

    /// Serialized checkpoint; its digest identifies the codec on the wire.
    fn checkpoint_bytes(&self) -> Vec<u8>;

    fn checksum(&self) -> String {
        sha256_hex(&self.checkpoint_bytes())
    }
}
