//! Model container, forward/backward passes, losses, and SGD training.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::{self, ConvDims, ConvTDims, LayerSpec, PoolDims};
use crate::rng::{self, stage};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Weights and bias of one layer; both empty for parameter-free layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Loss applied to the network output during an SGD step.
pub enum LossSpec<'a> {
    /// Softmax cross-entropy on logits against integer class labels.
    CrossEntropy { labels: &'a [usize] },
    /// Mean squared error against a target tensor of the output shape.
    Mse { target: &'a Tensor },
}

/// A feed-forward network: an ordered layer list plus its parameters.
///
/// Models are plain values; every operation that mutates parameters takes
/// `&mut self`, and cloning a model snapshots it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<LayerParams>,
    pub mode: Mode,
}

enum Cache {
    Input(Tensor),
    Argmax { arg: Vec<usize>, input_shape: Vec<usize> },
    Output(Tensor),
    /// Dropout keep-mask already scaled by 1/(1-p); `None` when inactive.
    Mask(Option<Vec<f64>>),
    Shape(Vec<usize>),
}

impl Model {
    /// Builds a model with Glorot-uniform weights drawn from the given seed.
    /// Validates that the layer shapes chain from `input_shape`.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut shape = input_shape.clone();
        for spec in &layers {
            shape = spec.output_shape(&shape)?;
        }
        let mut rng = rng::stream(seed, &[stage::MODEL_INIT]);
        let params = layers
            .iter()
            .map(|spec| {
                let (wn, bn) = spec.param_counts();
                let weights = match spec.fans() {
                    Some((fan_in, fan_out)) if wn > 0 => {
                        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        (0..wn).map(|_| rng.random_range(-limit..limit)).collect()
                    }
                    _ => vec![0.0; wn],
                };
                LayerParams {
                    weights,
                    bias: vec![0.0; bn],
                }
            })
            .collect();
        Ok(Self {
            input_shape,
            layers,
            params,
            mode: Mode::Train,
        })
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Per-sample output shape of the whole network.
    pub fn output_shape(&self) -> Vec<usize> {
        let mut shape = self.input_shape.clone();
        for spec in &self.layers {
            // validated at construction
            shape = spec.output_shape(&shape).expect("layer chain validated");
        }
        shape
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.weights.len() + p.bias.len()).sum()
    }

    /// Reshapes all parameters into one flat vector (layer order, weights
    /// before bias).
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for p in &self.params {
            out.extend_from_slice(&p.weights);
            out.extend_from_slice(&p.bias);
        }
        out
    }

    /// Restores parameters from a flat vector produced by
    /// [`Model::flatten_params`] on the same architecture.
    pub fn unflatten_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ParamLength {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for p in &mut self.params {
            let wn = p.weights.len();
            p.weights.copy_from_slice(&flat[off..off + wn]);
            off += wn;
            let bn = p.bias.len();
            p.bias.copy_from_slice(&flat[off..off + bn]);
            off += bn;
        }
        Ok(())
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        if batch.sample_shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                context: "model input".into(),
                expected: format!("{:?}", self.input_shape),
                got: format!("{:?}", batch.sample_shape()),
            });
        }
        Ok(())
    }

    /// Deterministic inference pass. Dropout is inactive here regardless of
    /// mode; logits (or reconstructions) come out unsquashed unless the
    /// architecture ends in an explicit activation.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let (out, _) = self.run_forward(batch, None)?;
        Ok(out)
    }

    /// Training pass: caches intermediates and samples dropout masks from
    /// `rng` when the model is in train mode.
    fn run_forward(
        &self,
        batch: &Tensor,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Vec<Cache>)> {
        self.check_input(batch)?;
        let b = batch.batch();
        let mut x = batch.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (li, (spec, params)) in self.layers.iter().zip(&self.params).enumerate() {
            let in_shape = x.sample_shape().to_vec();
            let out_sample = spec.output_shape(&in_shape)?;
            let mut out_shape = vec![b];
            out_shape.extend_from_slice(&out_sample);
            let (y, cache) = match spec {
                LayerSpec::Dense { input, output } => {
                    let y = layer::dense_forward(&x.data, b, *input, *output, &params.weights, &params.bias);
                    (y, Cache::Input(x.clone()))
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let d = ConvDims {
                        in_channels: *in_channels,
                        out_channels: *out_channels,
                        kernel: *kernel,
                        stride: *stride,
                        padding: *padding,
                        h: in_shape[1],
                        w: in_shape[2],
                        oh: out_sample[1],
                        ow: out_sample[2],
                    };
                    let y = layer::conv2d_forward(&x.data, b, &d, &params.weights, &params.bias);
                    (y, Cache::Input(x.clone()))
                }
                LayerSpec::ConvTranspose2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                } => {
                    let d = ConvTDims {
                        in_channels: *in_channels,
                        out_channels: *out_channels,
                        kernel: *kernel,
                        stride: *stride,
                        h: in_shape[1],
                        w: in_shape[2],
                        oh: out_sample[1],
                        ow: out_sample[2],
                    };
                    let y = layer::conv_t2d_forward(&x.data, b, &d, &params.weights, &params.bias);
                    (y, Cache::Input(x.clone()))
                }
                LayerSpec::MaxPool2d { kernel, stride } => {
                    let d = PoolDims {
                        channels: in_shape[0],
                        kernel: *kernel,
                        stride: *stride,
                        h: in_shape[1],
                        w: in_shape[2],
                        oh: out_sample[1],
                        ow: out_sample[2],
                    };
                    let (y, arg) = layer::max_pool_forward(&x.data, b, &d);
                    (
                        y,
                        Cache::Argmax {
                            arg,
                            input_shape: x.shape.clone(),
                        },
                    )
                }
                LayerSpec::Activation { function } => {
                    let y = layer::activation_forward(*function, &x.data, b, x.sample_len());
                    let t = Tensor::new(out_shape.clone(), y.clone())?;
                    (y, Cache::Output(t))
                }
                LayerSpec::Dropout { p } => match (&mut rng, self.mode) {
                    (Some(r), Mode::Train) if *p > 0.0 => {
                        let keep = 1.0 - *p;
                        let scale = 1.0 / keep;
                        let mask: Vec<f64> = x
                            .data
                            .iter()
                            .map(|_| if r.random::<f64>() < keep { scale } else { 0.0 })
                            .collect();
                        let y = x.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
                        (y, Cache::Mask(Some(mask)))
                    }
                    _ => (x.data.clone(), Cache::Mask(None)),
                },
                LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
                    (x.data.clone(), Cache::Shape(x.shape.clone()))
                }
            };
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer_index: li,
                    layer: spec.name(),
                });
            }
            x = Tensor::new(out_shape, y)?;
            caches.push(cache);
        }
        Ok((x, caches))
    }

    /// Backpropagates `dout` through the cached forward pass; returns
    /// per-layer parameter gradients (same layout as `params`).
    fn run_backward(&self, caches: &[Cache], dout: Tensor) -> Result<(Vec<LayerParams>, Tensor)> {
        let b = dout.batch();
        let mut grad = dout;
        let mut param_grads: Vec<LayerParams> = self
            .params
            .iter()
            .map(|p| LayerParams {
                weights: vec![0.0; p.weights.len()],
                bias: vec![0.0; p.bias.len()],
            })
            .collect();
        for li in (0..self.layers.len()).rev() {
            let spec = &self.layers[li];
            let params = &self.params[li];
            let cache = &caches[li];
            grad = match (spec, cache) {
                (LayerSpec::Dense { input, output }, Cache::Input(x)) => {
                    let (dx, dw, db) =
                        layer::dense_backward(&x.data, &grad.data, b, *input, *output, &params.weights);
                    param_grads[li] = LayerParams { weights: dw, bias: db };
                    Tensor::new(x.shape.clone(), dx)?
                }
                (
                    LayerSpec::Conv2d {
                        in_channels,
                        out_channels,
                        kernel,
                        stride,
                        padding,
                    },
                    Cache::Input(x),
                ) => {
                    let out_shape = grad.sample_shape();
                    let d = ConvDims {
                        in_channels: *in_channels,
                        out_channels: *out_channels,
                        kernel: *kernel,
                        stride: *stride,
                        padding: *padding,
                        h: x.sample_shape()[1],
                        w: x.sample_shape()[2],
                        oh: out_shape[1],
                        ow: out_shape[2],
                    };
                    let (dx, dw, db) = layer::conv2d_backward(&x.data, &grad.data, b, &d, &params.weights);
                    param_grads[li] = LayerParams { weights: dw, bias: db };
                    Tensor::new(x.shape.clone(), dx)?
                }
                (
                    LayerSpec::ConvTranspose2d {
                        in_channels,
                        out_channels,
                        kernel,
                        stride,
                    },
                    Cache::Input(x),
                ) => {
                    let out_shape = grad.sample_shape();
                    let d = ConvTDims {
                        in_channels: *in_channels,
                        out_channels: *out_channels,
                        kernel: *kernel,
                        stride: *stride,
                        h: x.sample_shape()[1],
                        w: x.sample_shape()[2],
                        oh: out_shape[1],
                        ow: out_shape[2],
                    };
                    let (dx, dw, db) = layer::conv_t2d_backward(&x.data, &grad.data, b, &d, &params.weights);
                    param_grads[li] = LayerParams { weights: dw, bias: db };
                    Tensor::new(x.shape.clone(), dx)?
                }
                (LayerSpec::MaxPool2d { .. }, Cache::Argmax { arg, input_shape }) => {
                    let input_len = input_shape.iter().product();
                    let dx = layer::max_pool_backward(&grad.data, arg, input_len);
                    Tensor::new(input_shape.clone(), dx)?
                }
                (LayerSpec::Activation { function }, Cache::Output(y)) => {
                    let dx =
                        layer::activation_backward(*function, &y.data, &grad.data, b, y.sample_len());
                    Tensor::new(y.shape.clone(), dx)?
                }
                (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => match mask {
                    Some(m) => {
                        let dx: Vec<f64> = grad.data.iter().zip(m).map(|(g, s)| g * s).collect();
                        Tensor::new(grad.shape.clone(), dx)?
                    }
                    None => grad,
                },
                (LayerSpec::Flatten, Cache::Shape(shape))
                | (LayerSpec::Reshape { .. }, Cache::Shape(shape)) => {
                    Tensor::new(shape.clone(), grad.data)?
                }
                _ => unreachable!("cache kind matches layer kind"),
            };
            for v in param_grads[li]
                .weights
                .iter()
                .chain(param_grads[li].bias.iter())
            {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        layer_index: li,
                        layer: spec.name(),
                    });
                }
            }
        }
        Ok((param_grads, grad))
    }

    /// One full-batch gradient step. Returns the pre-step loss.
    pub fn sgd_step(
        &mut self,
        batch: &Tensor,
        loss: LossSpec,
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        if lr < 0.0 {
            return Err(Error::InvalidArgument(format!("negative learning rate {lr}")));
        }
        let (out, caches) = self.run_forward(batch, Some(rng))?;
        let (loss_value, dout) = compute_loss(&out, &loss)?;
        if !loss_value.is_finite() {
            return Err(Error::NonFinite {
                layer_index: self.layers.len(),
                layer: "loss".into(),
            });
        }
        if lr == 0.0 {
            return Ok(loss_value);
        }
        let (grads, _) = self.run_backward(&caches, dout)?;
        for (p, g) in self.params.iter_mut().zip(&grads) {
            for (w, gw) in p.weights.iter_mut().zip(&g.weights) {
                *w -= lr * gw;
            }
            for (bv, gb) in p.bias.iter_mut().zip(&g.bias) {
                *bv -= lr * gb;
            }
        }
        Ok(loss_value)
    }

    /// Loss and parameter gradients for a batch without updating parameters.
    pub fn loss_and_grad(&self, batch: &Tensor, loss: LossSpec) -> Result<(f64, Vec<f64>)> {
        let (out, caches) = self.run_forward(batch, None)?;
        let (loss_value, dout) = compute_loss(&out, &loss)?;
        let (grads, _) = self.run_backward(&caches, dout)?;
        let mut flat = Vec::with_capacity(self.param_count());
        for g in &grads {
            flat.extend_from_slice(&g.weights);
            flat.extend_from_slice(&g.bias);
        }
        Ok((loss_value, flat))
    }

    /// Mini-batch SGD for `epochs` epochs with per-seed deterministic
    /// shuffling. Cross-entropy on integer labels.
    pub fn train_local(
        &mut self,
        data: &crate::data::Dataset,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        seed: u64,
    ) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset("train_local on a client with no samples".into()));
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        let mut rng = rng::stream(seed, &[stage::LOCAL_TRAIN]);
        let mut indices: Vec<usize> = (0..data.len()).collect();
        for _epoch in 0..epochs {
            shuffle(&mut indices, &mut rng);
            for chunk in indices.chunks(batch_size) {
                let (batch, labels) = data.batch(chunk);
                self.sgd_step(&batch, LossSpec::CrossEntropy { labels: &labels }, lr, &mut rng)?;
            }
        }
        Ok(())
    }

    /// Mean loss of the model on a batch (no parameter update, no dropout).
    pub fn eval_loss(&self, batch: &Tensor, loss: LossSpec) -> Result<f64> {
        let out = self.forward(batch)?;
        Ok(compute_loss(&out, &loss)?.0)
    }
}

/// Fisher-Yates with the stream's native range sampling.
pub fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}

/// Loss value and gradient with respect to the network output.
fn compute_loss(out: &Tensor, loss: &LossSpec) -> Result<(f64, Tensor)> {
    let b = out.batch();
    match loss {
        LossSpec::CrossEntropy { labels } => {
            if labels.len() != b {
                return Err(Error::ShapeMismatch {
                    context: "cross-entropy labels".into(),
                    expected: format!("{b} labels"),
                    got: format!("{}", labels.len()),
                });
            }
            let classes = out.sample_len();
            let mut total = 0.0;
            let mut grad = vec![0.0; out.len()];
            for (bi, &label) in labels.iter().enumerate() {
                if label >= classes {
                    return Err(Error::InvalidArgument(format!(
                        "label {label} out of range for {classes} classes"
                    )));
                }
                let logits = out.row(bi);
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + logits.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
                total += lse - logits[label];
                let gr = &mut grad[bi * classes..(bi + 1) * classes];
                for (i, &v) in logits.iter().enumerate() {
                    let p = (v - lse).exp();
                    gr[i] = (p - if i == label { 1.0 } else { 0.0 }) / b as f64;
                }
            }
            Ok((total / b as f64, Tensor::new(out.shape.clone(), grad)?))
        }
        LossSpec::Mse { target } => {
            if target.shape != out.shape {
                return Err(Error::ShapeMismatch {
                    context: "mse target".into(),
                    expected: format!("{:?}", out.shape),
                    got: format!("{:?}", target.shape),
                });
            }
            let n = out.len() as f64;
            let mut total = 0.0;
            let mut grad = vec![0.0; out.len()];
            for i in 0..out.len() {
                let d = out.data[i] - target.data[i];
                total += d * d;
                grad[i] = 2.0 * d / n;
            }
            Ok((total / n, Tensor::new(out.shape.clone(), grad)?))
        }
    }
}
