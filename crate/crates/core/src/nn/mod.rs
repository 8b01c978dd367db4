//! A small deterministic feed-forward trainer: dense and valid-conv layers,
//! 2x2 max-pooling, hand-written backprop and Adam.

mod adam;
mod network;
mod spec;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use network::{argmax_rows, backward, cross_entropy_loss, forward, mse_loss, Cache};
pub use spec::{
    Activation, ConvParams, DenseParams, Head, LayerParams, LayerSpec, NetworkSpec, Params, Shape,
    LEAKY_RELU_SLOPE,
};
pub use train::{
    early_stop_check, entropy_loss_and_grad, evaluate, train_autoencoder, train_cnn, BaseLoss,
    EntropyLayers, RunResult, StopDecision, TrainConfig,
};
