//! 2-D convolution via im2col and matrix products.

use rayon::prelude::*;

use super::layer::{init_weights, Init, LayerCache};
use super::tensor::{matmul_nn, matmul_nt, matmul_tn, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fixed number of batch slices used for parallel gradient accumulation.
/// Keeping the slice boundaries independent of the worker count makes the
/// floating-point reduction order, and therefore the result, identical for
/// any `--threads` setting.
pub(crate) const GRAD_SLICES: usize = 8;

#[derive(Clone)]
pub struct ConvLayer<F: Scalar> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// (out_channels, in_channels * kernel * kernel)
    pub weight: Tensor<F>,
    /// (out_channels)
    pub bias: Tensor<F>,
}

impl<F: Scalar> ConvLayer<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = out_channels * kernel * kernel;
        ConvLayer {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: init_weights(
                &[out_channels, fan_in],
                fan_in,
                fan_out,
                Init::HeUniform,
                rng,
            ),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn from_params(
        weight: Tensor<F>,
        bias: Tensor<F>,
        in_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        assert_eq!(weight.shape[1], in_channels * kernel * kernel);
        ConvLayer {
            in_channels,
            out_channels: weight.shape[0],
            kernel,
            stride,
            pad,
            weight,
            bias,
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let he = h + 2 * self.pad;
        let we = w + 2 * self.pad;
        if he < self.kernel || we < self.kernel {
            return None;
        }
        Some((
            (he - self.kernel) / self.stride + 1,
            (we - self.kernel) / self.stride + 1,
        ))
    }

    /// Expands one sample into a (c*k*k, ho*wo) patch matrix.
    fn im2col(&self, sample: &[F], h: usize, w: usize, ho: usize, wo: usize, cols: &mut [F]) {
        let k = self.kernel;
        let n_patches = ho * wo;
        debug_assert_eq!(cols.len(), self.in_channels * k * k * n_patches);
        for c in 0..self.in_channels {
            let plane = &sample[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((c * k + ki) * k + kj) * n_patches;
                    for oi in 0..ho {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        let dst = &mut cols[row + oi * wo..row + (oi + 1) * wo];
                        if ii < 0 || ii as usize >= h {
                            dst.iter_mut().for_each(|v| *v = F::ZERO);
                            continue;
                        }
                        let src_row = &plane[ii as usize * w..(ii as usize + 1) * w];
                        for (oj, d) in dst.iter_mut().enumerate() {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            *d = if jj < 0 || jj as usize >= w {
                                F::ZERO
                            } else {
                                src_row[jj as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    pub fn forward(
        &self,
        x: &Tensor<F>,
        location: &str,
    ) -> Result<(Tensor<F>, LayerCache<F>)> {
        if x.shape.len() != 4 || x.shape[1] != self.in_channels {
            return Err(Error::Shape {
                location: location.to_string(),
                detail: format!(
                    "conv2d expects (n, {}, h, w), got {:?}",
                    self.in_channels, x.shape
                ),
            });
        }
        let (n, _, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (ho, wo) = self.out_hw(h, w).ok_or_else(|| Error::Shape {
            location: location.to_string(),
            detail: format!("conv2d kernel {} exceeds input {h}x{w}", self.kernel),
        })?;
        let n_patches = ho * wo;
        let ckk = self.in_channels * self.kernel * self.kernel;
        let sample_len = self.in_channels * h * w;
        let out_len = self.out_channels * n_patches;

        let mut out = Tensor::zeros(&[n, self.out_channels, ho, wo]);
        out.data
            .par_chunks_mut(out_len)
            .enumerate()
            .for_each(|(s, out_s)| {
                let mut cols = vec![F::ZERO; ckk * n_patches];
                self.im2col(
                    &x.data[s * sample_len..(s + 1) * sample_len],
                    h,
                    w,
                    ho,
                    wo,
                    &mut cols,
                );
                matmul_nn(
                    &self.weight.data,
                    &cols,
                    self.out_channels,
                    ckk,
                    n_patches,
                    out_s,
                );
                for (c, plane) in out_s.chunks_mut(n_patches).enumerate() {
                    let b = self.bias.data[c];
                    plane.iter_mut().for_each(|v| *v += b);
                }
            });
        Ok((
            out,
            LayerCache::Conv {
                input: x.clone(),
                out_hw: (ho, wo),
            },
        ))
    }

    pub fn backward(
        &self,
        input: &Tensor<F>,
        out_hw: (usize, usize),
        grad: &Tensor<F>,
        want_input_grad: bool,
    ) -> (Option<Tensor<F>>, Vec<Tensor<F>>) {
        let (n, _, h, w) = (
            input.shape[0],
            input.shape[1],
            input.shape[2],
            input.shape[3],
        );
        let (ho, wo) = out_hw;
        let n_patches = ho * wo;
        let ckk = self.in_channels * self.kernel * self.kernel;
        let sample_len = self.in_channels * h * w;
        let out_len = self.out_channels * n_patches;

        // Per-slice accumulation keeps the reduction order fixed.
        let slice_len = n.div_ceil(GRAD_SLICES.min(n));
        let slices: Vec<(usize, usize)> = (0..n)
            .step_by(slice_len)
            .map(|lo| (lo, (lo + slice_len).min(n)))
            .collect();

        struct SliceOut<F: Scalar> {
            d_weight: Vec<F>,
            d_bias: Vec<F>,
            d_input: Option<Vec<F>>,
        }

        let partials: Vec<SliceOut<F>> = slices
            .par_iter()
            .map(|&(lo, hi)| {
                let mut d_weight = vec![F::ZERO; self.out_channels * ckk];
                let mut dw_s = vec![F::ZERO; self.out_channels * ckk];
                let mut d_bias = vec![F::ZERO; self.out_channels];
                let mut d_input =
                    want_input_grad.then(|| vec![F::ZERO; (hi - lo) * sample_len]);
                let mut cols = vec![F::ZERO; ckk * n_patches];
                let mut d_cols = vec![F::ZERO; ckk * n_patches];
                for s in lo..hi {
                    let g_s = &grad.data[s * out_len..(s + 1) * out_len];
                    self.im2col(
                        &input.data[s * sample_len..(s + 1) * sample_len],
                        h,
                        w,
                        ho,
                        wo,
                        &mut cols,
                    );
                    // dW += g_s (Cout, P) x cols^T (P, ckk)
                    matmul_nt(g_s, &cols, self.out_channels, n_patches, ckk, &mut dw_s);
                    for (acc, &v) in d_weight.iter_mut().zip(&dw_s) {
                        *acc += v;
                    }
                    for (c, plane) in g_s.chunks(n_patches).enumerate() {
                        for &g in plane {
                            d_bias[c] += g;
                        }
                    }
                    if let Some(d_input) = d_input.as_mut() {
                        // d_cols = W^T (ckk, Cout) x g_s (Cout, P)
                        matmul_tn(
                            &self.weight.data,
                            g_s,
                            self.out_channels,
                            ckk,
                            n_patches,
                            &mut d_cols,
                        );
                        let dst = &mut d_input[(s - lo) * sample_len..(s - lo + 1) * sample_len];
                        self.col2im(&d_cols, h, w, ho, wo, dst);
                    }
                }
                SliceOut {
                    d_weight,
                    d_bias,
                    d_input,
                }
            })
            .collect();

        let mut d_weight = Tensor::zeros(&[self.out_channels, ckk]);
        let mut d_bias = Tensor::zeros(&[self.out_channels]);
        let mut d_input = want_input_grad.then(|| Tensor::zeros(&input.shape));
        for (slice, part) in slices.iter().zip(partials) {
            for (acc, v) in d_weight.data.iter_mut().zip(part.d_weight) {
                *acc += v;
            }
            for (acc, v) in d_bias.data.iter_mut().zip(part.d_bias) {
                *acc += v;
            }
            if let (Some(dx), Some(part_dx)) = (d_input.as_mut(), part.d_input) {
                dx.data[slice.0 * sample_len..slice.1 * sample_len].copy_from_slice(&part_dx);
            }
        }
        (d_input, vec![d_weight, d_bias])
    }

    /// Scatter-adds a patch-gradient matrix back onto one input sample.
    fn col2im(&self, d_cols: &[F], h: usize, w: usize, ho: usize, wo: usize, out: &mut [F]) {
        let k = self.kernel;
        let n_patches = ho * wo;
        out.iter_mut().for_each(|v| *v = F::ZERO);
        for c in 0..self.in_channels {
            let plane = &mut out[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((c * k + ki) * k + kj) * n_patches;
                    for oi in 0..ho {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        if ii < 0 || ii as usize >= h {
                            continue;
                        }
                        for oj in 0..wo {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            if jj < 0 || jj as usize >= w {
                                continue;
                            }
                            plane[ii as usize * w + jj as usize] += d_cols[row + oi * wo + oj];
                        }
                    }
                }
            }
        }
    }
}
