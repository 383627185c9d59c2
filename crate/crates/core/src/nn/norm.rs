//! Batch normalisation.
//!
//! Works per channel on (n, c, h, w) inputs and per feature on (n, d)
//! inputs. Training mode normalises with batch statistics and proposes a
//! running-statistics update in the cache, which the trainer applies after
//! the optimiser step; evaluation (and frozen-layer) mode uses the stored
//! running statistics, so repeated forwards never mutate the layer.

use super::layer::{LayerCache, Mode};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

const EPS: f64 = 1e-5;
const MOMENTUM: f64 = 0.9;

#[derive(Clone)]
pub struct BatchNormLayer<F: Scalar> {
    pub channels: usize,
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
}

pub struct BatchNormCache<F: Scalar> {
    /// Normalised activations.
    xhat: Tensor<F>,
    /// Per channel 1 / sqrt(var + eps).
    inv_std: Vec<F>,
    /// Batch statistics proposed for the running update; empty in eval mode.
    batch_mean: Vec<F>,
    batch_var: Vec<F>,
    /// Channel geometry of the input.
    layout: Layout,
}

#[derive(Clone, Copy)]
struct Layout {
    n: usize,
    channels: usize,
    /// Spatial elements per channel (1 for dense inputs).
    spatial: usize,
}

impl Layout {
    fn of(shape: &[usize], channels: usize, location: &str) -> Result<Layout> {
        match shape {
            [n, c] if *c == channels => Ok(Layout {
                n: *n,
                channels,
                spatial: 1,
            }),
            [n, c, h, w] if *c == channels => Ok(Layout {
                n: *n,
                channels,
                spatial: h * w,
            }),
            _ => Err(Error::Shape {
                location: location.to_string(),
                detail: format!("batchnorm over {channels} channels got {shape:?}"),
            }),
        }
    }

    fn offset(&self, sample: usize, channel: usize) -> usize {
        (sample * self.channels + channel) * self.spatial
    }
}

impl<F: Scalar> BatchNormLayer<F> {
    pub fn new(channels: usize) -> Self {
        BatchNormLayer {
            channels,
            gamma: Tensor::from_vec(&[channels], vec![F::ONE; channels]),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::from_vec(&[channels], vec![F::ONE; channels]),
        }
    }

    pub fn forward(
        &self,
        x: &Tensor<F>,
        mode: Mode,
        location: &str,
    ) -> Result<(Tensor<F>, LayerCache<F>)> {
        let layout = Layout::of(&x.shape, self.channels, location)?;
        let m = (layout.n * layout.spatial) as f64;

        let (mean, var, batch_stats) = if mode == Mode::Train {
            let mut mean = vec![F::ZERO; self.channels];
            let mut var = vec![F::ZERO; self.channels];
            for c in 0..self.channels {
                let mut sum = F::ZERO;
                for s in 0..layout.n {
                    let off = layout.offset(s, c);
                    for &v in &x.data[off..off + layout.spatial] {
                        sum += v;
                    }
                }
                let mu = sum / F::from_f64(m);
                let mut sq = F::ZERO;
                for s in 0..layout.n {
                    let off = layout.offset(s, c);
                    for &v in &x.data[off..off + layout.spatial] {
                        let d = v - mu;
                        sq += d * d;
                    }
                }
                mean[c] = mu;
                var[c] = sq / F::from_f64(m);
            }
            (mean.clone(), var.clone(), true)
        } else {
            (
                self.running_mean.data.clone(),
                self.running_var.data.clone(),
                false,
            )
        };

        let inv_std: Vec<F> = var
            .iter()
            .map(|&v| F::ONE / (v + F::from_f64(EPS)).sqrt())
            .collect();

        let mut xhat = Tensor::zeros(&x.shape);
        let mut out = Tensor::zeros(&x.shape);
        for c in 0..self.channels {
            let g = self.gamma.data[c];
            let b = self.beta.data[c];
            for s in 0..layout.n {
                let off = layout.offset(s, c);
                for i in off..off + layout.spatial {
                    let h = (x.data[i] - mean[c]) * inv_std[c];
                    xhat.data[i] = h;
                    out.data[i] = g * h + b;
                }
            }
        }

        let cache = BatchNormCache {
            xhat,
            inv_std,
            batch_mean: if batch_stats { mean } else { Vec::new() },
            batch_var: if batch_stats { var } else { Vec::new() },
            layout,
        };
        Ok((out, LayerCache::BatchNorm(cache)))
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache<F>,
        grad: &Tensor<F>,
        want_input_grad: bool,
    ) -> (Option<Tensor<F>>, Vec<Tensor<F>>) {
        let layout = cache.layout;
        let m = F::from_f64((layout.n * layout.spatial) as f64);
        let mut d_gamma = Tensor::zeros(&[self.channels]);
        let mut d_beta = Tensor::zeros(&[self.channels]);
        for c in 0..self.channels {
            let mut dg = F::ZERO;
            let mut db = F::ZERO;
            for s in 0..layout.n {
                let off = layout.offset(s, c);
                for i in off..off + layout.spatial {
                    dg += grad.data[i] * cache.xhat.data[i];
                    db += grad.data[i];
                }
            }
            d_gamma.data[c] = dg;
            d_beta.data[c] = db;
        }

        let d_input = want_input_grad.then(|| {
            let mut dx = Tensor::zeros(&grad.shape);
            let trained_stats = !cache.batch_mean.is_empty();
            for c in 0..self.channels {
                let scale = self.gamma.data[c] * cache.inv_std[c];
                if trained_stats {
                    // batch statistics were part of the graph
                    let mean_g = d_beta.data[c] / m;
                    let mean_gx = d_gamma.data[c] / m;
                    for s in 0..layout.n {
                        let off = layout.offset(s, c);
                        for i in off..off + layout.spatial {
                            dx.data[i] = scale
                                * (grad.data[i] - mean_g - cache.xhat.data[i] * mean_gx);
                        }
                    }
                } else {
                    // running statistics are constants
                    for s in 0..layout.n {
                        let off = layout.offset(s, c);
                        for i in off..off + layout.spatial {
                            dx.data[i] = scale * grad.data[i];
                        }
                    }
                }
            }
            dx
        });

        (d_input, vec![d_gamma, d_beta])
    }

    pub fn apply_update(&mut self, cache: &BatchNormCache<F>) {
        if cache.batch_mean.is_empty() {
            return;
        }
        let momentum = F::from_f64(MOMENTUM);
        let rest = F::ONE - momentum;
        for c in 0..self.channels {
            self.running_mean.data[c] =
                momentum * self.running_mean.data[c] + rest * cache.batch_mean[c];
            self.running_var.data[c] =
                momentum * self.running_var.data[c] + rest * cache.batch_var[c];
        }
    }
}
