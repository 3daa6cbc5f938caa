//! Stock architectures and the signature encoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::{Activation, LayerSpec};
use crate::nn::model::{LossSpec, Mode, Model};
use crate::rng::{self, stage};

/// MLP classifier: flatten -> dense(hidden) -> relu -> dropout -> dense(classes).
pub fn mlp(input_shape: &[usize], hidden: usize, num_classes: usize, dropout: f64, seed: u64) -> Result<Model> {
    let input: usize = input_shape.iter().product();
    let layers = vec![
        LayerSpec::Flatten,
        LayerSpec::Dense { input, output: hidden },
        LayerSpec::Activation { function: Activation::Relu },
        LayerSpec::Dropout { p: dropout },
        LayerSpec::Dense { input: hidden, output: num_classes },
    ];
    Model::new(input_shape.to_vec(), layers, seed)
}

/// Small CNN classifier: two 5x5 conv/pool stages and two dense layers.
pub fn small_cnn(
    channels: usize,
    height: usize,
    width: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Model> {
    let h4 = height / 4;
    let w4 = width / 4;
    if h4 * 4 != height || w4 * 4 != width {
        return Err(Error::InvalidArgument(format!(
            "small_cnn needs spatial dims divisible by 4, got {height}x{width}"
        )));
    }
    let layers = vec![
        LayerSpec::Conv2d { in_channels: channels, out_channels: 32, kernel: 5, stride: 1, padding: 2 },
        LayerSpec::Activation { function: Activation::Relu },
        LayerSpec::MaxPool2d { kernel: 2, stride: 2 },
        LayerSpec::Conv2d { in_channels: 32, out_channels: 64, kernel: 5, stride: 1, padding: 2 },
        LayerSpec::Activation { function: Activation::Relu },
        LayerSpec::MaxPool2d { kernel: 2, stride: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense { input: 64 * h4 * w4, output: 2048 },
        LayerSpec::Activation { function: Activation::Relu },
        LayerSpec::Dense { input: 2048, output: num_classes },
    ];
    Model::new(vec![channels, height, width], layers, seed)
}

/// Convolutional autoencoder. The encoder half is two 3x3 conv/pool stages
/// followed by a dense projection to `latent_dim`; the decoder mirrors it
/// with two stride-2 transposed convolutions back to the input plane.
///
/// `encoder_layer_count` layers from the front form the encoder half used
/// for embedding extraction.
pub fn conv_ae(channels: usize, height: usize, width: usize, latent_dim: usize, seed: u64) -> Result<Model> {
    let h4 = height / 4;
    let w4 = width / 4;
    if h4 * 4 != height || w4 * 4 != width {
        return Err(Error::InvalidArgument(format!(
            "conv_ae needs spatial dims divisible by 4, got {height}x{width}"
        )));
    }
    let bottleneck = 4 * h4 * w4;
    let layers = vec![
        LayerSpec::Conv2d { in_channels: channels, out_channels: 16, kernel: 3, stride: 1, padding: 1 },
        LayerSpec::Activation { function: Activation::Relu },
        LayerSpec::MaxPool2d { kernel: 2, stride: 2 },
        LayerSpec::Conv2d { in_channels: 16, out_channels: 4, kernel: 3, stride: 1, padding: 1 },
        LayerSpec::Activation { function: Activation::Relu },
        LayerSpec::MaxPool2d { kernel: 2, stride: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense { input: bottleneck, output: latent_dim },
        // decoder
        LayerSpec::Dense { input: latent_dim, output: bottleneck },
        LayerSpec::Activation { function: Activation::Relu },
        LayerSpec::Reshape { shape: vec![4, h4, w4] },
        LayerSpec::ConvTranspose2d { in_channels: 4, out_channels: 16, kernel: 2, stride: 2 },
        LayerSpec::Activation { function: Activation::Relu },
        LayerSpec::ConvTranspose2d { in_channels: 16, out_channels: channels, kernel: 2, stride: 2 },
        LayerSpec::Activation { function: Activation::Sigmoid },
    ];
    Model::new(vec![channels, height, width], layers, seed)
}

/// Number of leading layers forming the encoder half of [`conv_ae`].
pub const CONV_AE_ENCODER_LAYERS: usize = 8;

/// Dense autoencoder for flat features: input -> hidden -> latent -> hidden -> input.
pub fn dense_ae(input_dim: usize, hidden: usize, latent_dim: usize, seed: u64) -> Result<Model> {
    let layers = vec![
        LayerSpec::Dense { input: input_dim, output: hidden },
        LayerSpec::Activation { function: Activation::Relu },
        LayerSpec::Dense { input: hidden, output: latent_dim },
        // decoder
        LayerSpec::Dense { input: latent_dim, output: hidden },
        LayerSpec::Activation { function: Activation::Relu },
        LayerSpec::Dense { input: hidden, output: input_dim },
    ];
    Model::new(vec![input_dim], layers, seed)
}

/// Number of leading layers forming the encoder half of [`dense_ae`].
pub const DENSE_AE_ENCODER_LAYERS: usize = 3;

/// The latent-embedding extractor handed to clients.
///
/// Either the identity map on flattened features, or the encoder half of an
/// autoencoder (the full autoencoder is kept so clients can fine-tune it on
/// their own data before extracting embeddings).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EncoderHandle {
    /// Latent vector = flattened input features.
    Identity { input_len: usize },
    /// Encoder half of an autoencoder.
    Autoencoder {
        model: Model,
        encoder_layers: usize,
        latent_dim: usize,
    },
}

impl EncoderHandle {
    pub fn identity(input_len: usize) -> Self {
        EncoderHandle::Identity { input_len }
    }

    pub fn from_autoencoder(model: Model, encoder_layers: usize) -> Result<Self> {
        let out = model.output_shape();
        if out != model.input_shape {
            return Err(Error::ShapeMismatch {
                context: "EncoderHandle::from_autoencoder".into(),
                expected: format!("autoencoder output {:?}", model.input_shape),
                got: format!("{out:?}"),
            });
        }
        if encoder_layers == 0 || encoder_layers > model.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "encoder_layers {encoder_layers} out of range"
            )));
        }
        let mut shape = model.input_shape.clone();
        for spec in &model.layers[..encoder_layers] {
            shape = spec.output_shape(&shape)?;
        }
        if shape.len() != 1 {
            return Err(Error::ShapeMismatch {
                context: "encoder half output".into(),
                expected: "flat latent vector".into(),
                got: format!("{shape:?}"),
            });
        }
        Ok(EncoderHandle::Autoencoder {
            latent_dim: shape[0],
            model,
            encoder_layers,
        })
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            EncoderHandle::Identity { input_len } => *input_len,
            EncoderHandle::Autoencoder { latent_dim, .. } => *latent_dim,
        }
    }

    /// Embeds every sample of `data`; output i corresponds to sample i.
    pub fn encode(&self, data: &crate::data::Dataset) -> Result<Vec<Vec<f64>>> {
        match self {
            EncoderHandle::Identity { input_len } => {
                if data.sample_len() != *input_len {
                    return Err(Error::ShapeMismatch {
                        context: "identity encoder".into(),
                        expected: format!("samples of length {input_len}"),
                        got: format!("{}", data.sample_len()),
                    });
                }
                Ok((0..data.len()).map(|i| data.feature(i).to_vec()).collect())
            }
            EncoderHandle::Autoencoder {
                model,
                encoder_layers,
                latent_dim,
            } => {
                let mut encoder = Model {
                    input_shape: model.input_shape.clone(),
                    layers: model.layers[..*encoder_layers].to_vec(),
                    params: model.params[..*encoder_layers].to_vec(),
                    mode: Mode::Eval,
                };
                encoder.set_mode(Mode::Eval);
                let mut out = Vec::with_capacity(data.len());
                // batch in chunks to bound memory
                let chunk = 256;
                let mut idx = 0;
                while idx < data.len() {
                    let hi = (idx + chunk).min(data.len());
                    let indices: Vec<usize> = (idx..hi).collect();
                    let (batch, _) = data.batch(&indices);
                    let z = encoder.forward(&batch)?;
                    for bi in 0..z.batch() {
                        out.push(z.row(bi).to_vec());
                    }
                    idx = hi;
                }
                debug_assert!(out.iter().all(|v| v.len() == *latent_dim));
                Ok(out)
            }
        }
    }

    /// Fine-tunes the underlying autoencoder on the client's data for
    /// `epochs` epochs of unsupervised reconstruction (MSE), returning a new
    /// handle. Identity encoders pass through unchanged.
    pub fn finetuned(
        &self,
        data: &crate::data::Dataset,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        seed: u64,
    ) -> Result<Self> {
        match self {
            EncoderHandle::Identity { .. } => Ok(self.clone()),
            EncoderHandle::Autoencoder {
                model,
                encoder_layers,
                ..
            } => {
                let mut ae = model.clone();
                finetune_autoencoder(&mut ae, data, epochs, batch_size, lr, seed)?;
                EncoderHandle::from_autoencoder(ae, *encoder_layers)
            }
        }
    }
}

/// Unsupervised reconstruction training: `epochs` epochs of mini-batch SGD
/// with MSE between output and input. Fails if the model is not an
/// autoencoder (output shape != input shape).
pub fn finetune_autoencoder(
    ae: &mut Model,
    data: &crate::data::Dataset,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<()> {
    if ae.output_shape() != ae.input_shape {
        return Err(Error::ShapeMismatch {
            context: "finetune_autoencoder".into(),
            expected: format!("output shape {:?} (an autoencoder)", ae.input_shape),
            got: format!("{:?}", ae.output_shape()),
        });
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset("finetune_autoencoder on empty data".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    let mut rng = rng::stream(seed, &[stage::FINETUNE]);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    for _ in 0..epochs {
        crate::nn::model::shuffle(&mut indices, &mut rng);
        for chunk in indices.chunks(batch_size) {
            let (batch, _) = data.batch(chunk);
            ae.sgd_step(&batch, LossSpec::Mse { target: &batch }, lr, &mut rng)?;
        }
    }
    Ok(())
}
