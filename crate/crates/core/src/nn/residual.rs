//! Residual blocks: a small convolutional main path added onto an identity
//! (or 1x1-projected) shortcut, followed by relu.

use super::conv::ConvLayer;
use super::layer::{Layer, LayerCache, Mode, ResidualKind};
use super::norm::BatchNormLayer;
use super::tensor::{Scalar, Tensor};
use crate::error::Result;
use crate::rng::Rng;

/// Bottleneck blocks expand their inner channel count by this factor.
pub const BOTTLENECK_EXPANSION: usize = 4;

#[derive(Clone)]
pub struct ResidualBlock<F: Scalar> {
    pub kind: ResidualKind,
    /// Base channel count; bottleneck blocks emit channels * 4.
    pub channels: usize,
    pub stride: usize,
    main: Vec<Layer<F>>,
    shortcut: Vec<Layer<F>>,
}

pub struct ResidualCache<F: Scalar> {
    main: Vec<LayerCache<F>>,
    shortcut: Vec<LayerCache<F>>,
    /// Relu mask over the post-addition activations.
    sum_mask: Vec<bool>,
}

impl<F: Scalar> ResidualBlock<F> {
    /// Output channels of the block.
    pub fn out_channels(&self) -> usize {
        match self.kind {
            ResidualKind::Basic => self.channels,
            ResidualKind::Bottleneck => self.channels * BOTTLENECK_EXPANSION,
        }
    }

    pub fn new(
        kind: ResidualKind,
        in_channels: usize,
        channels: usize,
        stride: usize,
        rng: &mut Rng,
    ) -> Self {
        let main = match kind {
            ResidualKind::Basic => vec![
                Layer::Conv2d(ConvLayer::new(in_channels, channels, 3, stride, 1, rng)),
                Layer::BatchNorm(BatchNormLayer::new(channels)),
                Layer::Relu,
                Layer::Conv2d(ConvLayer::new(channels, channels, 3, 1, 1, rng)),
                Layer::BatchNorm(BatchNormLayer::new(channels)),
            ],
            ResidualKind::Bottleneck => {
                let out = channels * BOTTLENECK_EXPANSION;
                vec![
                    Layer::Conv2d(ConvLayer::new(in_channels, channels, 1, 1, 0, rng)),
                    Layer::BatchNorm(BatchNormLayer::new(channels)),
                    Layer::Relu,
                    Layer::Conv2d(ConvLayer::new(channels, channels, 3, stride, 1, rng)),
                    Layer::BatchNorm(BatchNormLayer::new(channels)),
                    Layer::Relu,
                    Layer::Conv2d(ConvLayer::new(channels, out, 1, 1, 0, rng)),
                    Layer::BatchNorm(BatchNormLayer::new(out)),
                ]
            }
        };
        let out_channels = match kind {
            ResidualKind::Basic => channels,
            ResidualKind::Bottleneck => channels * BOTTLENECK_EXPANSION,
        };
        let shortcut = if stride != 1 || in_channels != out_channels {
            vec![
                Layer::Conv2d(ConvLayer::new(in_channels, out_channels, 1, stride, 0, rng)),
                Layer::BatchNorm(BatchNormLayer::new(out_channels)),
            ]
        } else {
            vec![]
        };
        ResidualBlock {
            kind,
            channels,
            stride,
            main,
            shortcut,
        }
    }

    pub fn forward(
        &self,
        x: &Tensor<F>,
        mode: Mode,
        mut rng: Option<&mut Rng>,
        location: &str,
    ) -> Result<(Tensor<F>, LayerCache<F>)> {
        let mut main_caches = Vec::with_capacity(self.main.len());
        let mut cur = x.clone();
        for (i, layer) in self.main.iter().enumerate() {
            let loc = format!("{location}.main{i}");
            let (next, cache) =
                layer.forward(&cur, mode, rng.as_mut().map(|r| &mut **r), &loc)?;
            main_caches.push(cache);
            cur = next;
        }
        let mut short_caches = Vec::with_capacity(self.shortcut.len());
        let mut short = x.clone();
        for (i, layer) in self.shortcut.iter().enumerate() {
            let loc = format!("{location}.short{i}");
            let (next, cache) =
                layer.forward(&short, mode, rng.as_mut().map(|r| &mut **r), &loc)?;
            short_caches.push(cache);
            short = next;
        }
        debug_assert_eq!(cur.shape, short.shape, "residual add shape mismatch");
        let mut out = cur;
        let mut sum_mask = vec![false; out.numel()];
        for ((o, &s), m) in out.data.iter_mut().zip(&short.data).zip(&mut sum_mask) {
            let v = *o + s;
            if v > F::ZERO {
                *o = v;
                *m = true;
            } else {
                *o = F::ZERO;
            }
        }
        Ok((
            out,
            LayerCache::Residual(ResidualCache {
                main: main_caches,
                shortcut: short_caches,
                sum_mask,
            }),
        ))
    }

    pub fn backward(
        &self,
        cache: &ResidualCache<F>,
        grad: &Tensor<F>,
        want_input_grad: bool,
    ) -> (Option<Tensor<F>>, Vec<Tensor<F>>) {
        // relu over the sum
        let mut g_sum = grad.clone();
        for (g, &m) in g_sum.data.iter_mut().zip(&cache.sum_mask) {
            if !m {
                *g = F::ZERO;
            }
        }

        // main path, collecting parameter grads in forward order
        let mut per_layer_grads: Vec<Vec<Tensor<F>>> = vec![Vec::new(); self.main.len()];
        let mut g = g_sum.clone();
        for (i, layer) in self.main.iter().enumerate().rev() {
            let (dx, pg) = layer.backward(&cache.main[i], &g, true);
            per_layer_grads[i] = pg;
            g = dx.expect("interior layers always produce input grads");
        }
        let main_dx = g;

        let short_dx = if self.shortcut.is_empty() {
            g_sum
        } else {
            let mut per_short: Vec<Vec<Tensor<F>>> = vec![Vec::new(); self.shortcut.len()];
            let mut g = g_sum;
            for (i, layer) in self.shortcut.iter().enumerate().rev() {
                let (dx, pg) = layer.backward(&cache.shortcut[i], &g, true);
                per_short[i] = pg;
                g = dx.expect("interior layers always produce input grads");
            }
            // shortcut grads follow the main ones, matching params() order
            per_layer_grads.extend(per_short);
            g
        };

        let d_input = want_input_grad.then(|| {
            let mut dx = main_dx;
            for (a, &b) in dx.data.iter_mut().zip(&short_dx.data) {
                *a += b;
            }
            dx
        });

        (d_input, per_layer_grads.into_iter().flatten().collect())
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        self.main
            .iter()
            .chain(&self.shortcut)
            .flat_map(|l| l.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.main
            .iter_mut()
            .chain(&mut self.shortcut)
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, l) in self.main.iter().enumerate() {
            for n in l.param_names() {
                names.push(format!("main{i}.{n}"));
            }
        }
        for (i, l) in self.shortcut.iter().enumerate() {
            for n in l.param_names() {
                names.push(format!("short{i}.{n}"));
            }
        }
        names
    }

    pub fn buffers(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::new();
        for (i, l) in self.main.iter().enumerate() {
            for (n, t) in l.buffers() {
                out.push((format!("main{i}.{n}"), t));
            }
        }
        for (i, l) in self.shortcut.iter().enumerate() {
            for (n, t) in l.buffers() {
                out.push((format!("short{i}.{n}"), t));
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out = Vec::new();
        for (i, l) in self.main.iter_mut().enumerate() {
            for (n, t) in l.buffers_mut() {
                out.push((format!("main{i}.{n}"), t));
            }
        }
        for (i, l) in self.shortcut.iter_mut().enumerate() {
            for (n, t) in l.buffers_mut() {
                out.push((format!("short{i}.{n}"), t));
            }
        }
        out
    }

    pub fn apply_norm_updates(&mut self, cache: &ResidualCache<F>) {
        for (layer, c) in self.main.iter_mut().zip(&cache.main) {
            layer.apply_norm_updates(c);
        }
        for (layer, c) in self.shortcut.iter_mut().zip(&cache.shortcut) {
            layer.apply_norm_updates(c);
        }
    }

    /// Rebuilds a block skeleton and then assigns parameters (and running
    /// statistics) by name; used by checkpoint loading.
    pub fn from_named_params(
        kind: ResidualKind,
        in_channels: usize,
        channels: usize,
        stride: usize,
        mut take: impl FnMut(&str) -> Result<Tensor<F>>,
    ) -> Result<Self> {
        let mut rng = Rng::seed_from(0);
        let mut block = ResidualBlock::new(kind, in_channels, channels, stride, &mut rng);
        let names = block.param_names();
        for (slot, name) in block.params_mut().into_iter().zip(&names) {
            *slot = take(name)?;
        }
        for (name, tensor) in block.buffers_mut() {
            *tensor = take(&name)?;
        }
        Ok(block)
    }
}
