//! The joint transmitter / multi-receiver autoencoder.

mod autoencoder;
mod config;

pub use autoencoder::{
    decode, one_hot, Autoencoder, JointLoss, JointObjective, ModelGradients, Network, NetworkRef,
    ReceiverOutputs,
};
pub use config::{LossWeights, MessagePair, ModelConfig};
