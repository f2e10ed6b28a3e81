//! A minimal dense-network engine: forward pass, exact reverse-mode
//! gradients, softmax/cross-entropy and first-order optimizers.

mod gradcheck;
mod layer;
mod loss;
mod optim;
mod stack;

pub use gradcheck::{
    finite_difference_check, GradCheckReport, Objective, StackObjective, StackTarget,
};
pub use layer::{dense_forward, Activation, DenseLayer, LayerCache};
pub use loss::{cross_entropy, softmax, softmax_cross_entropy_grad, PROBABILITY_FLOOR};
pub use optim::{
    adam_step, sgd_step, Adam, AdamState, Optimizer, ParamId, ParamKind, ParamSlot, Sgd,
};
pub use stack::{DenseStack, GradientStore, LayerGrad, OutputGrad, StackCache};
