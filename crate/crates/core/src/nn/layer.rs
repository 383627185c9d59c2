//! Layer dispatch: forward, backward, parameter traversal.

use super::conv::ConvLayer;
use super::dense::DenseLayer;
use super::lstm::LstmLayer;
use super::norm::BatchNormLayer;
use super::residual::ResidualBlock;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Weight initialisation family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Uniform in ±sqrt(6 / fan_in); used ahead of relu activations.
    HeUniform,
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)); used for recurrent and
    /// pre-softmax layers.
    GlorotUniform,
}

pub fn init_weights<F: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    init: Init,
    rng: &mut Rng,
) -> Tensor<F> {
    let limit = match init {
        Init::HeUniform => (6.0 / fan_in as f64).sqrt(),
        Init::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    };
    let data = (0..shape.iter().product::<usize>())
        .map(|_| F::from_f64(rng.uniform(-limit, limit)))
        .collect();
    Tensor::from_vec(shape, data)
}

/// Forward execution mode. Frozen layers always run in `Eval` regardless of
/// the network-level mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Variant shape of a residual block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// Two 3x3 convolutions.
    Basic,
    /// 1x1 reduce, 3x3, 1x1 expand (4x); the 50-layer stack uses this.
    Bottleneck,
}

/// Public architecture description; one entry per layer.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "layer")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    MaxPool,
    Dense {
        units: usize,
    },
    Relu,
    Softmax {
        dim: usize,
    },
    Dropout {
        rate: f64,
    },
    Lstm {
        units: usize,
    },
    BatchNorm,
    ResidualBlock {
        kind: ResidualKind,
        channels: usize,
        stride: usize,
    },
}

#[derive(Clone)]
pub enum Layer<F: Scalar> {
    Dense(DenseLayer<F>),
    Conv2d(ConvLayer<F>),
    MaxPool,
    Relu,
    Softmax { dim: usize },
    Dropout { rate: f64 },
    Lstm(LstmLayer<F>),
    BatchNorm(BatchNormLayer<F>),
    Residual(ResidualBlock<F>),
}

/// Per-layer activations retained for the backward pass.
pub enum LayerCache<F: Scalar> {
    Dense {
        input: Tensor<F>,
    },
    Conv {
        input: Tensor<F>,
        out_hw: (usize, usize),
    },
    MaxPool {
        in_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Relu {
        mask: Vec<bool>,
    },
    Softmax {
        output: Tensor<F>,
    },
    Dropout {
        mask: Option<Vec<F>>,
    },
    Lstm(super::lstm::LstmCache<F>),
    BatchNorm(super::norm::BatchNormCache<F>),
    Residual(super::residual::ResidualCache<F>),
}

impl<F: Scalar> Layer<F> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool => "maxpool",
            Layer::Relu => "relu",
            Layer::Softmax { .. } => "softmax",
            Layer::Dropout { .. } => "dropout",
            Layer::Lstm(_) => "lstm",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Residual(_) => "residual",
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense { units: d.out_dim },
            Layer::Conv2d(c) => LayerSpec::Conv2d {
                filters: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
            },
            Layer::MaxPool => LayerSpec::MaxPool,
            Layer::Relu => LayerSpec::Relu,
            Layer::Softmax { dim } => LayerSpec::Softmax { dim: *dim },
            Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
            Layer::Lstm(l) => LayerSpec::Lstm { units: l.units },
            Layer::BatchNorm(_) => LayerSpec::BatchNorm,
            Layer::Residual(r) => LayerSpec::ResidualBlock {
                kind: r.kind,
                channels: r.channels,
                stride: r.stride,
            },
        }
    }

    pub fn forward(
        &self,
        x: &Tensor<F>,
        mode: Mode,
        rng: Option<&mut Rng>,
        location: &str,
    ) -> Result<(Tensor<F>, LayerCache<F>)> {
        match self {
            Layer::Dense(d) => d.forward(x, location),
            Layer::Conv2d(c) => c.forward(x, location),
            Layer::MaxPool => maxpool_forward(x, location),
            Layer::Relu => Ok(relu_forward(x)),
            Layer::Softmax { dim } => softmax_forward(x, *dim, location),
            Layer::Dropout { rate } => Ok(dropout_forward(x, *rate, mode, rng)),
            Layer::Lstm(l) => l.forward(x, location),
            Layer::BatchNorm(b) => b.forward(x, mode, location),
            Layer::Residual(r) => r.forward(x, mode, rng, location),
        }
    }

    /// Returns (input gradient if requested, parameter gradients in
    /// `params()` order).
    pub fn backward(
        &self,
        cache: &LayerCache<F>,
        grad: &Tensor<F>,
        want_input_grad: bool,
    ) -> (Option<Tensor<F>>, Vec<Tensor<F>>) {
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Dense { input }) => {
                d.backward(input, grad, want_input_grad)
            }
            (Layer::Conv2d(c), LayerCache::Conv { input, out_hw }) => {
                c.backward(input, *out_hw, grad, want_input_grad)
            }
            (Layer::MaxPool, LayerCache::MaxPool { in_shape, argmax }) => {
                (maxpool_backward(in_shape, argmax, grad), vec![])
            }
            (Layer::Relu, LayerCache::Relu { mask }) => {
                let mut dx = grad.clone();
                for (v, &m) in dx.data.iter_mut().zip(mask) {
                    if !m {
                        *v = F::ZERO;
                    }
                }
                (Some(dx), vec![])
            }
            (Layer::Softmax { .. }, LayerCache::Softmax { output }) => {
                (Some(softmax_backward(output, grad)), vec![])
            }
            (Layer::Dropout { .. }, LayerCache::Dropout { mask }) => {
                let dx = match mask {
                    None => grad.clone(),
                    Some(mask) => {
                        let mut dx = grad.clone();
                        for (v, &m) in dx.data.iter_mut().zip(mask) {
                            *v *= m;
                        }
                        dx
                    }
                };
                (Some(dx), vec![])
            }
            (Layer::Lstm(l), LayerCache::Lstm(c)) => l.backward(c, grad, want_input_grad),
            (Layer::BatchNorm(b), LayerCache::BatchNorm(c)) => {
                b.backward(c, grad, want_input_grad)
            }
            (Layer::Residual(r), LayerCache::Residual(c)) => {
                r.backward(c, grad, want_input_grad)
            }
            _ => panic!("layer/cache variant mismatch"),
        }
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::Lstm(l) => vec![&l.w_ih, &l.w_hh, &l.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            Layer::Residual(r) => r.params(),
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Lstm(l) => vec![&mut l.w_ih, &mut l.w_hh, &mut l.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            Layer::Residual(r) => r.params_mut(),
            _ => vec![],
        }
    }

    /// Layer-local parameter names, aligned with `params()`.
    pub fn param_names(&self) -> Vec<String> {
        match self {
            Layer::Dense(_) | Layer::Conv2d(_) => vec!["w".into(), "b".into()],
            Layer::Lstm(_) => vec!["w_ih".into(), "w_hh".into(), "b".into()],
            Layer::BatchNorm(_) => vec!["gamma".into(), "beta".into()],
            Layer::Residual(r) => r.param_names(),
            _ => vec![],
        }
    }

    /// Non-trained state (normalisation running statistics), aligned pairs
    /// of name and tensor.
    pub fn buffers(&self) -> Vec<(String, &Tensor<F>)> {
        match self {
            Layer::BatchNorm(b) => vec![
                ("running_mean".into(), &b.running_mean),
                ("running_var".into(), &b.running_var),
            ],
            Layer::Residual(r) => r.buffers(),
            _ => vec![],
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        match self {
            Layer::BatchNorm(b) => vec![
                ("running_mean".into(), &mut b.running_mean),
                ("running_var".into(), &mut b.running_var),
            ],
            Layer::Residual(r) => r.buffers_mut(),
            _ => vec![],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Applies the running-statistics update a training-mode forward
    /// proposed in the cache.
    pub fn apply_norm_updates(&mut self, cache: &LayerCache<F>) {
        match (self, cache) {
            (Layer::BatchNorm(b), LayerCache::BatchNorm(c)) => b.apply_update(c),
            (Layer::Residual(r), LayerCache::Residual(c)) => r.apply_norm_updates(c),
            _ => {}
        }
    }
}

fn relu_forward<F: Scalar>(x: &Tensor<F>) -> (Tensor<F>, LayerCache<F>) {
    let mut out = x.clone();
    let mask: Vec<bool> = x.data.iter().map(|&v| v > F::ZERO).collect();
    for (v, &m) in out.data.iter_mut().zip(&mask) {
        if !m {
            *v = F::ZERO;
        }
    }
    (out, LayerCache::Relu { mask })
}

fn softmax_forward<F: Scalar>(
    x: &Tensor<F>,
    dim: usize,
    location: &str,
) -> Result<(Tensor<F>, LayerCache<F>)> {
    let width = *x.shape.last().unwrap();
    if width != dim {
        return Err(Error::Shape {
            location: location.to_string(),
            detail: format!("softmax expects width {dim}, input has {width}"),
        });
    }
    let mut out = x.clone();
    for row in out.data.chunks_mut(width) {
        // log-sum-exp stabilisation
        let mut max = row[0];
        for &v in row.iter() {
            max = max.maximum(v);
        }
        let mut sum = F::ZERO;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    let cache = LayerCache::Softmax {
        output: out.clone(),
    };
    Ok((out, cache))
}

fn softmax_backward<F: Scalar>(output: &Tensor<F>, grad: &Tensor<F>) -> Tensor<F> {
    let width = *output.shape.last().unwrap();
    let mut dx = Tensor::zeros(&output.shape);
    for ((p_row, g_row), dx_row) in output
        .data
        .chunks(width)
        .zip(grad.data.chunks(width))
        .zip(dx.data.chunks_mut(width))
    {
        let mut dot = F::ZERO;
        for (&p, &g) in p_row.iter().zip(g_row) {
            dot += p * g;
        }
        for ((d, &p), &g) in dx_row.iter_mut().zip(p_row).zip(g_row) {
            *d = p * (g - dot);
        }
    }
    dx
}

fn dropout_forward<F: Scalar>(
    x: &Tensor<F>,
    rate: f64,
    mode: Mode,
    rng: Option<&mut Rng>,
) -> (Tensor<F>, LayerCache<F>) {
    if mode == Mode::Eval || rate == 0.0 {
        return (x.clone(), LayerCache::Dropout { mask: None });
    }
    let rng = rng.expect("training-mode dropout requires an rng");
    let scale = F::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<F> = x
        .data
        .iter()
        .map(|_| {
            if rng.next_f64() < rate {
                F::ZERO
            } else {
                scale
            }
        })
        .collect();
    let mut out = x.clone();
    for (v, &m) in out.data.iter_mut().zip(&mask) {
        *v *= m;
    }
    (out, LayerCache::Dropout { mask: Some(mask) })
}

fn maxpool_forward<F: Scalar>(
    x: &Tensor<F>,
    location: &str,
) -> Result<(Tensor<F>, LayerCache<F>)> {
    if x.shape.len() != 4 {
        return Err(Error::Shape {
            location: location.to_string(),
            detail: format!("maxpool expects (n, c, h, w), got {:?}", x.shape),
        });
    }
    let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (ho, wo) = (h / 2, w / 2);
    if ho == 0 || wo == 0 {
        return Err(Error::Shape {
            location: location.to_string(),
            detail: format!("maxpool input {h}x{w} too small"),
        });
    }
    let mut out = Tensor::zeros(&[n, c, ho, wo]);
    let mut argmax = vec![0usize; n * c * ho * wo];
    for in_ch in 0..n * c {
        let base = in_ch * h * w;
        let out_base = in_ch * ho * wo;
        for i in 0..ho {
            for j in 0..wo {
                let mut best_off = base + (2 * i) * w + 2 * j;
                let mut best = x.data[best_off];
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let off = base + (2 * i + di) * w + 2 * j + dj;
                    if x.data[off] > best {
                        best = x.data[off];
                        best_off = off;
                    }
                }
                out.data[out_base + i * wo + j] = best;
                argmax[out_base + i * wo + j] = best_off;
            }
        }
    }
    Ok((
        out,
        LayerCache::MaxPool {
            in_shape: x.shape.clone(),
            argmax,
        },
    ))
}

fn maxpool_backward<F: Scalar>(
    in_shape: &[usize],
    argmax: &[usize],
    grad: &Tensor<F>,
) -> Option<Tensor<F>> {
    let mut dx = Tensor::zeros(in_shape);
    for (&src, &g) in argmax.iter().zip(&grad.data) {
        dx.data[src] += g;
    }
    Some(dx)
}
