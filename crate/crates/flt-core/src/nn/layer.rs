//! Layer descriptors and their forward/backward kernels.
//!
//! All kernels operate on batched row-major buffers; shapes are per-sample
//! (the batch axis is implicit and passed separately). Convolutions are
//! direct loops; correctness is defined by the finite-difference tests.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
}

/// Declarative layer description. A model is an ordered list of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    Activation {
        function: Activation,
    },
    Dropout {
        p: f64,
    },
    Flatten,
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn name(&self) -> String {
        match self {
            LayerSpec::Dense { input, output } => format!("dense({input}->{output})"),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => format!("conv2d({in_channels}->{out_channels},k{kernel})"),
            LayerSpec::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => format!("conv_t2d({in_channels}->{out_channels},k{kernel})"),
            LayerSpec::MaxPool2d { kernel, .. } => format!("max_pool2d(k{kernel})"),
            LayerSpec::Activation { function } => format!("{function:?}").to_lowercase(),
            LayerSpec::Dropout { p } => format!("dropout(p={p})"),
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::Reshape { shape } => format!("reshape({shape:?})"),
        }
    }

    /// (weight count, bias count) for this layer.
    pub fn param_counts(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { input, output } => (input * output, output),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (out_channels * in_channels * kernel * kernel, out_channels),
            LayerSpec::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (in_channels * out_channels * kernel * kernel, out_channels),
            _ => (0, 0),
        }
    }

    /// Glorot-uniform fan pair, when the layer has weights.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Dense { input, output } => Some((input, output)),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((in_channels * kernel * kernel, out_channels * kernel * kernel)),
            LayerSpec::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((in_channels * kernel * kernel, out_channels * kernel * kernel)),
            _ => None,
        }
    }

    /// Per-sample output shape given the per-sample input shape.
    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: String| Error::ShapeMismatch {
            context: self.name(),
            expected,
            got: format!("{input_shape:?}"),
        };
        match *self {
            LayerSpec::Dense { input, output } => {
                if input_shape != [input] {
                    return Err(mismatch(format!("[{input}]")));
                }
                Ok(vec![output])
            }
            LayerSpec::Conv2d {
                in_channels,
                kernel,
                stride,
                padding,
                out_channels,
            } => {
                let [c, h, w] = three_d(input_shape).ok_or_else(|| mismatch("[C,H,W]".into()))?;
                if c != in_channels {
                    return Err(mismatch(format!("[{in_channels},H,W]")));
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel || stride == 0 {
                    return Err(mismatch(format!("spatial dims >= kernel {kernel}")));
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerSpec::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let [c, h, w] = three_d(input_shape).ok_or_else(|| mismatch("[C,H,W]".into()))?;
                if c != in_channels {
                    return Err(mismatch(format!("[{in_channels},H,W]")));
                }
                Ok(vec![out_channels, (h - 1) * stride + kernel, (w - 1) * stride + kernel])
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                let [c, h, w] = three_d(input_shape).ok_or_else(|| mismatch("[C,H,W]".into()))?;
                if h < kernel || w < kernel || stride == 0 {
                    return Err(mismatch(format!("spatial dims >= kernel {kernel}")));
                }
                Ok(vec![c, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            LayerSpec::Activation { .. } | LayerSpec::Dropout { .. } => Ok(input_shape.to_vec()),
            LayerSpec::Flatten => Ok(vec![input_shape.iter().product()]),
            LayerSpec::Reshape { ref shape } => {
                let have: usize = input_shape.iter().product();
                let want: usize = shape.iter().product();
                if have != want {
                    return Err(mismatch(format!("{want} elements for {shape:?}")));
                }
                Ok(shape.clone())
            }
        }
    }
}

fn three_d(shape: &[usize]) -> Option<[usize; 3]> {
    match shape {
        [c, h, w] => Some([*c, *h, *w]),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

pub fn dense_forward(x: &[f64], batch: usize, input: usize, output: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; batch * output];
    for bi in 0..batch {
        let xr = &x[bi * input..(bi + 1) * input];
        let yr = &mut y[bi * output..(bi + 1) * output];
        for (o, yo) in yr.iter_mut().enumerate() {
            let wr = &w[o * input..(o + 1) * input];
            let mut acc = b[o];
            for i in 0..input {
                acc += xr[i] * wr[i];
            }
            *yo = acc;
        }
    }
    y
}

pub fn dense_backward(
    x: &[f64],
    dy: &[f64],
    batch: usize,
    input: usize,
    output: usize,
    w: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; batch * input];
    let mut dw = vec![0.0; input * output];
    let mut db = vec![0.0; output];
    for bi in 0..batch {
        let xr = &x[bi * input..(bi + 1) * input];
        let dyr = &dy[bi * output..(bi + 1) * output];
        let dxr = &mut dx[bi * input..(bi + 1) * input];
        for o in 0..output {
            let g = dyr[o];
            db[o] += g;
            let wr = &w[o * input..(o + 1) * input];
            let dwr = &mut dw[o * input..(o + 1) * input];
            for i in 0..input {
                dwr[i] += g * xr[i];
                dxr[i] += g * wr[i];
            }
        }
    }
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// Conv2d (direct loops)
// ---------------------------------------------------------------------------

pub struct ConvDims {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

pub fn conv2d_forward(x: &[f64], batch: usize, d: &ConvDims, wgt: &[f64], b: &[f64]) -> Vec<f64> {
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    let mut y = vec![0.0; batch * d.out_channels * out_plane];
    for bi in 0..batch {
        let xb = &x[bi * d.in_channels * in_plane..];
        let yb = &mut y[bi * d.out_channels * out_plane..(bi + 1) * d.out_channels * out_plane];
        for oc in 0..d.out_channels {
            for ohi in 0..d.oh {
                for owi in 0..d.ow {
                    let mut acc = b[oc];
                    for ic in 0..d.in_channels {
                        let xplane = &xb[ic * in_plane..(ic + 1) * in_plane];
                        let wbase = ((oc * d.in_channels + ic) * d.kernel) * d.kernel;
                        for kh in 0..d.kernel {
                            let ih = (ohi * d.stride + kh) as isize - d.padding as isize;
                            if ih < 0 || ih >= d.h as isize {
                                continue;
                            }
                            for kw in 0..d.kernel {
                                let iw = (owi * d.stride + kw) as isize - d.padding as isize;
                                if iw < 0 || iw >= d.w as isize {
                                    continue;
                                }
                                acc += xplane[ih as usize * d.w + iw as usize]
                                    * wgt[wbase + kh * d.kernel + kw];
                            }
                        }
                    }
                    yb[oc * out_plane + ohi * d.ow + owi] = acc;
                }
            }
        }
    }
    y
}

pub fn conv2d_backward(
    x: &[f64],
    dy: &[f64],
    batch: usize,
    d: &ConvDims,
    wgt: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    let mut dx = vec![0.0; batch * d.in_channels * in_plane];
    let mut dw = vec![0.0; wgt.len()];
    let mut db = vec![0.0; d.out_channels];
    for bi in 0..batch {
        let xb = &x[bi * d.in_channels * in_plane..];
        let dxb = &mut dx[bi * d.in_channels * in_plane..(bi + 1) * d.in_channels * in_plane];
        let dyb = &dy[bi * d.out_channels * out_plane..];
        for oc in 0..d.out_channels {
            for ohi in 0..d.oh {
                for owi in 0..d.ow {
                    let g = dyb[oc * out_plane + ohi * d.ow + owi];
                    if g == 0.0 {
                        continue;
                    }
                    db[oc] += g;
                    for ic in 0..d.in_channels {
                        let xplane = &xb[ic * in_plane..(ic + 1) * in_plane];
                        let dxplane = &mut dxb[ic * in_plane..(ic + 1) * in_plane];
                        let wbase = ((oc * d.in_channels + ic) * d.kernel) * d.kernel;
                        for kh in 0..d.kernel {
                            let ih = (ohi * d.stride + kh) as isize - d.padding as isize;
                            if ih < 0 || ih >= d.h as isize {
                                continue;
                            }
                            for kw in 0..d.kernel {
                                let iw = (owi * d.stride + kw) as isize - d.padding as isize;
                                if iw < 0 || iw >= d.w as isize {
                                    continue;
                                }
                                let xi = ih as usize * d.w + iw as usize;
                                dw[wbase + kh * d.kernel + kw] += g * xplane[xi];
                                dxplane[xi] += g * wgt[wbase + kh * d.kernel + kw];
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// ConvTranspose2d. Weight layout is [in_ch][out_ch][k][k].
// ---------------------------------------------------------------------------

pub struct ConvTDims {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

pub fn conv_t2d_forward(x: &[f64], batch: usize, d: &ConvTDims, wgt: &[f64], b: &[f64]) -> Vec<f64> {
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    let mut y = vec![0.0; batch * d.out_channels * out_plane];
    for bi in 0..batch {
        let yb = &mut y[bi * d.out_channels * out_plane..(bi + 1) * d.out_channels * out_plane];
        for oc in 0..d.out_channels {
            let plane = &mut yb[oc * out_plane..(oc + 1) * out_plane];
            for v in plane.iter_mut() {
                *v = b[oc];
            }
        }
        let xb = &x[bi * d.in_channels * in_plane..];
        for ic in 0..d.in_channels {
            let xplane = &xb[ic * in_plane..(ic + 1) * in_plane];
            for oc in 0..d.out_channels {
                let wbase = ((ic * d.out_channels + oc) * d.kernel) * d.kernel;
                for ihi in 0..d.h {
                    for iwi in 0..d.w {
                        let xv = xplane[ihi * d.w + iwi];
                        if xv == 0.0 {
                            continue;
                        }
                        for kh in 0..d.kernel {
                            let oh = ihi * d.stride + kh;
                            for kw in 0..d.kernel {
                                let ow = iwi * d.stride + kw;
                                yb[oc * out_plane + oh * d.ow + ow] +=
                                    xv * wgt[wbase + kh * d.kernel + kw];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

pub fn conv_t2d_backward(
    x: &[f64],
    dy: &[f64],
    batch: usize,
    d: &ConvTDims,
    wgt: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    let mut dx = vec![0.0; batch * d.in_channels * in_plane];
    let mut dw = vec![0.0; wgt.len()];
    let mut db = vec![0.0; d.out_channels];
    for bi in 0..batch {
        let dyb = &dy[bi * d.out_channels * out_plane..];
        for oc in 0..d.out_channels {
            db[oc] += dyb[oc * out_plane..(oc + 1) * out_plane].iter().sum::<f64>();
        }
        let xb = &x[bi * d.in_channels * in_plane..];
        let dxb = &mut dx[bi * d.in_channels * in_plane..(bi + 1) * d.in_channels * in_plane];
        for ic in 0..d.in_channels {
            let xplane = &xb[ic * in_plane..(ic + 1) * in_plane];
            let dxplane = &mut dxb[ic * in_plane..(ic + 1) * in_plane];
            for oc in 0..d.out_channels {
                let wbase = ((ic * d.out_channels + oc) * d.kernel) * d.kernel;
                for ihi in 0..d.h {
                    for iwi in 0..d.w {
                        let xv = xplane[ihi * d.w + iwi];
                        let mut acc = 0.0;
                        for kh in 0..d.kernel {
                            let oh = ihi * d.stride + kh;
                            for kw in 0..d.kernel {
                                let ow = iwi * d.stride + kw;
                                let g = dyb[oc * out_plane + oh * d.ow + ow];
                                acc += g * wgt[wbase + kh * d.kernel + kw];
                                dw[wbase + kh * d.kernel + kw] += g * xv;
                            }
                        }
                        dxplane[ihi * d.w + iwi] += acc;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// MaxPool2d
// ---------------------------------------------------------------------------

pub struct PoolDims {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

/// Returns (output, argmax) where argmax holds flat input indices
/// (per batch element, channel included). Ties resolve to the first
/// window element in row-major order.
pub fn max_pool_forward(x: &[f64], batch: usize, d: &PoolDims) -> (Vec<f64>, Vec<usize>) {
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    let in_len = d.channels * in_plane;
    let out_len = d.channels * out_plane;
    let mut y = vec![0.0; batch * out_len];
    let mut arg = vec![0usize; batch * out_len];
    for bi in 0..batch {
        let xb = &x[bi * in_len..(bi + 1) * in_len];
        for c in 0..d.channels {
            let xplane = &xb[c * in_plane..(c + 1) * in_plane];
            for ohi in 0..d.oh {
                for owi in 0..d.ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for kh in 0..d.kernel {
                        let ih = ohi * d.stride + kh;
                        for kw in 0..d.kernel {
                            let iw = owi * d.stride + kw;
                            let v = xplane[ih * d.w + iw];
                            if v > best {
                                best = v;
                                best_idx = ih * d.w + iw;
                            }
                        }
                    }
                    let oi = c * out_plane + ohi * d.ow + owi;
                    y[bi * out_len + oi] = best;
                    arg[bi * out_len + oi] = bi * in_len + c * in_plane + best_idx;
                }
            }
        }
    }
    (y, arg)
}

pub fn max_pool_backward(dy: &[f64], arg: &[usize], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (g, &idx) in dy.iter().zip(arg) {
        dx[idx] += g;
    }
    dx
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

pub fn activation_forward(f: Activation, x: &[f64], batch: usize, sample_len: usize) -> Vec<f64> {
    match f {
        Activation::Relu => x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        Activation::Sigmoid => x.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
        Activation::Tanh => x.iter().map(|&v| v.tanh()).collect(),
        Activation::Softmax => {
            let mut y = vec![0.0; x.len()];
            for bi in 0..batch {
                let xr = &x[bi * sample_len..(bi + 1) * sample_len];
                let yr = &mut y[bi * sample_len..(bi + 1) * sample_len];
                let m = xr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (o, &v) in yr.iter_mut().zip(xr) {
                    *o = (v - m).exp();
                    z += *o;
                }
                for o in yr.iter_mut() {
                    *o /= z;
                }
            }
            y
        }
    }
}

/// Gradient through an activation given its cached output `y`.
pub fn activation_backward(
    f: Activation,
    y: &[f64],
    dy: &[f64],
    batch: usize,
    sample_len: usize,
) -> Vec<f64> {
    match f {
        Activation::Relu => y
            .iter()
            .zip(dy)
            .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
            .collect(),
        Activation::Sigmoid => y.iter().zip(dy).map(|(&o, &g)| g * o * (1.0 - o)).collect(),
        Activation::Tanh => y.iter().zip(dy).map(|(&o, &g)| g * (1.0 - o * o)).collect(),
        Activation::Softmax => {
            let mut dx = vec![0.0; y.len()];
            for bi in 0..batch {
                let yr = &y[bi * sample_len..(bi + 1) * sample_len];
                let gr = &dy[bi * sample_len..(bi + 1) * sample_len];
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                let dr = &mut dx[bi * sample_len..(bi + 1) * sample_len];
                for i in 0..sample_len {
                    dr[i] = yr[i] * (gr[i] - dot);
                }
            }
            dx
        }
    }
}
