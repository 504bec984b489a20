//! Minimal dense neural-network engine with hand-derived gradients.

mod adam;
mod loss;
mod matrix;
mod stack;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{
    binary_logistic_loss, entropy, entropy_from_logits, log_softmax, sigmoid, softmax,
    softmax_cross_entropy, softplus, DISTRIBUTION_TOLERANCE,
};
pub use matrix::{squared_distance, Matrix};
pub use stack::{
    Activation, DenseLayer, DenseStack, ForwardCache, Init, LayerGradients, StackGradients,
};
