//! End-to-end learned transmission of an in-technology message and a
//! superimposed cross-technology (CTC) message over a shared OFDM
//! time-frequency grid.
//!
//! The transmitter is two dense branches whose outputs are added and
//! energy-normalized. The channel is AWGN. The in-technology receiver reads
//! the transmitter's own grid, while every CTC receiver first sees the signal
//! through a mean/repeat resampling onto its own grid. Everything is trained
//! jointly with a weighted cross-entropy objective.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! parallel sweeps live in the `deepctc` crate.
#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod channel;
mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod otfg;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{Autoencoder, LossWeights, MessagePair, ModelConfig};
pub use otfg::{GridSignal, OtfgSpec};
pub use tensor::Tensor;
