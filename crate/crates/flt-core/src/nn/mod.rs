//! Dense/convolutional network engine with manual backpropagation and SGD.
//!
//! Everything runs in 64-bit reals and all randomness (weight init, batch
//! shuffling, dropout masks) flows from explicit seeds, so training is
//! reproducible to the bit.

pub mod arch;
pub mod checkpoint;
pub mod layer;
pub mod model;

pub use arch::{
    conv_ae, dense_ae, finetune_autoencoder, mlp, small_cnn, EncoderHandle,
    CONV_AE_ENCODER_LAYERS, DENSE_AE_ENCODER_LAYERS,
};
pub use layer::{Activation, LayerSpec};
pub use model::{LayerParams, LossSpec, Mode, Model};
