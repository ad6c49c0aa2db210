//! Differentiable building blocks for the decoder: dense and 1-D convolution
//! layers, a stacked bidirectional LSTM, activations, binary cross-entropy,
//! Adam, gradient checking and versioned checkpoint files.

pub mod checkpoint;
pub mod gradcheck;
pub mod kernels;
pub mod layers;
pub mod lstm;
pub mod ops;
pub mod params;

pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use layers::{Conv1d, Linear};
pub use lstm::{BiLstm, BiLstmLayer, LstmCell};
pub use ops::{bce_grad, bce_loss, relu, sigmoid, softmax, softmax_rows};
pub use params::{adam_step, adam_update, AdamConfig, AdamState, Initializer, Params};
