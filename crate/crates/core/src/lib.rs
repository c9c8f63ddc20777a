//! Progressive latent transmission for split edge/cloud inference.
//!
//! A latent token matrix is encoded once into an ordered representation whose
//! prefixes decode to increasingly accurate reconstructions. The receiver
//! estimates reconstruction quality from the prefix it holds and asks for more
//! chunks only while the quality stays below a threshold.
//!
//! Module map:
//!
//! * [`kernel`]: dense matrices, a recorded-graph reverse-mode gradient tape,
//!   Adam, checkpoints and a finite-difference gradient checker.
//! * [`repr`]: level boundaries, prefix masking, chunking and receiver-side
//!   accumulation.
//! * [`codec`]: the trainable transformer codec with its error head, and a
//!   closed-form principal-direction codec used as an exact reference.
//! * [`transport`]: payload schema, HTTP/1.1 framing and the token-bucket
//!   link model.
//! * [`control`]: the threshold rule, edge/cloud session state machines and
//!   cost ledgers.
//! * [`endpoints`]: the edge agent and the cloud service.
//! * [`bench`]: synthetic data, metrics and the experiment runners.

pub mod bench;
pub mod codec;
pub mod control;
pub mod endpoints;
mod error;
pub mod kernel;
pub mod repr;
pub mod transport;

pub use error::{Error, Result};
