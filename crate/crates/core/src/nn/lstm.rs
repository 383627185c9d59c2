//! LSTM layer with full backpropagation through time.
//!
//! Input is (batch, steps, features); a recording's feature matrix is fed
//! column by column, so steps = segments. Gate order in the fused weight
//! matrices is input, forget, cell, output. The forget-gate bias starts at
//! one. With `return_sequences` the layer emits every hidden state
//! (batch, steps, units) so layers can stack; otherwise only the final
//! hidden state (batch, units) feeds the dense tail.

use super::layer::{init_weights, Init, LayerCache};
use super::tensor::{matmul_nn, matmul_nt, matmul_tn, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone)]
pub struct LstmLayer<F: Scalar> {
    pub in_dim: usize,
    pub units: usize,
    pub return_sequences: bool,
    /// (4 * units, in_dim)
    pub w_ih: Tensor<F>,
    /// (4 * units, units)
    pub w_hh: Tensor<F>,
    /// (4 * units)
    pub bias: Tensor<F>,
}

pub struct LstmCache<F: Scalar> {
    input: Tensor<F>,
    /// Per step: gate activations (n, 4u) after nonlinearity.
    gates: Vec<Tensor<F>>,
    /// Per step: cell state (n, u).
    cells: Vec<Tensor<F>>,
    /// Per step: tanh of the cell state (n, u).
    cell_tanh: Vec<Tensor<F>>,
    /// Per step: hidden state (n, u).
    hidden: Vec<Tensor<F>>,
}

fn sigmoid<F: Scalar>(x: F) -> F {
    F::ONE / (F::ONE + (-x).exp())
}

impl<F: Scalar> LstmLayer<F> {
    pub fn new(in_dim: usize, units: usize, return_sequences: bool, rng: &mut Rng) -> Self {
        let mut bias = Tensor::zeros(&[4 * units]);
        // forget-gate bias starts open
        for v in &mut bias.data[units..2 * units] {
            *v = F::ONE;
        }
        LstmLayer {
            in_dim,
            units,
            return_sequences,
            w_ih: init_weights(
                &[4 * units, in_dim],
                in_dim,
                4 * units,
                Init::GlorotUniform,
                rng,
            ),
            w_hh: init_weights(
                &[4 * units, units],
                units,
                4 * units,
                Init::GlorotUniform,
                rng,
            ),
            bias,
        }
    }

    pub fn from_params(
        w_ih: Tensor<F>,
        w_hh: Tensor<F>,
        bias: Tensor<F>,
        return_sequences: bool,
    ) -> Self {
        let units = w_hh.shape[1];
        LstmLayer {
            in_dim: w_ih.shape[1],
            units,
            return_sequences,
            w_ih,
            w_hh,
            bias,
        }
    }

    pub fn forward(
        &self,
        x: &Tensor<F>,
        location: &str,
    ) -> Result<(Tensor<F>, LayerCache<F>)> {
        if x.shape.len() != 3 || x.shape[2] != self.in_dim {
            return Err(Error::Shape {
                location: location.to_string(),
                detail: format!(
                    "lstm expects (n, steps, {}), got {:?}",
                    self.in_dim, x.shape
                ),
            });
        }
        let (n, steps) = (x.shape[0], x.shape[1]);
        let u = self.units;

        let mut gates = Vec::with_capacity(steps);
        let mut cells = Vec::with_capacity(steps);
        let mut cell_tanh = Vec::with_capacity(steps);
        let mut hidden = Vec::with_capacity(steps);

        let mut h_prev = Tensor::<F>::zeros(&[n, u]);
        let mut c_prev = Tensor::<F>::zeros(&[n, u]);
        let mut z = vec![F::ZERO; n * 4 * u];
        let mut z_rec = vec![F::ZERO; n * 4 * u];

        for t in 0..steps {
            // x_t (n, in_dim): gather the step's rows
            let mut x_t = Tensor::zeros(&[n, self.in_dim]);
            for s in 0..n {
                let src = (s * steps + t) * self.in_dim;
                let dst = s * self.in_dim;
                x_t.data[dst..dst + self.in_dim]
                    .copy_from_slice(&x.data[src..src + self.in_dim]);
            }
            matmul_nt(&x_t.data, &self.w_ih.data, n, self.in_dim, 4 * u, &mut z);
            matmul_nt(&h_prev.data, &self.w_hh.data, n, u, 4 * u, &mut z_rec);
            let mut gate = Tensor::zeros(&[n, 4 * u]);
            let mut c_t = Tensor::zeros(&[n, u]);
            let mut tanh_t = Tensor::zeros(&[n, u]);
            let mut h_t = Tensor::zeros(&[n, u]);
            for s in 0..n {
                let base = s * 4 * u;
                for j in 0..4 * u {
                    let pre = z[base + j] + z_rec[base + j] + self.bias.data[j];
                    gate.data[base + j] = if j / u == 2 { pre.tanh() } else { sigmoid(pre) };
                }
                for j in 0..u {
                    let i_g = gate.data[base + j];
                    let f_g = gate.data[base + u + j];
                    let g_g = gate.data[base + 2 * u + j];
                    let o_g = gate.data[base + 3 * u + j];
                    let c = f_g * c_prev.data[s * u + j] + i_g * g_g;
                    let ct = c.tanh();
                    c_t.data[s * u + j] = c;
                    tanh_t.data[s * u + j] = ct;
                    h_t.data[s * u + j] = o_g * ct;
                }
            }
            gates.push(gate);
            cells.push(c_t.clone());
            cell_tanh.push(tanh_t);
            hidden.push(h_t.clone());
            h_prev = h_t;
            c_prev = c_t;
        }

        let out = if self.return_sequences {
            let mut out = Tensor::zeros(&[n, steps, u]);
            for (t, h) in hidden.iter().enumerate() {
                for s in 0..n {
                    let dst = (s * steps + t) * u;
                    out.data[dst..dst + u].copy_from_slice(&h.data[s * u..(s + 1) * u]);
                }
            }
            out
        } else {
            hidden.last().unwrap().clone()
        };

        Ok((
            out,
            LayerCache::Lstm(LstmCache {
                input: x.clone(),
                gates,
                cells,
                cell_tanh,
                hidden,
            }),
        ))
    }

    pub fn backward(
        &self,
        cache: &LstmCache<F>,
        grad: &Tensor<F>,
        want_input_grad: bool,
    ) -> (Option<Tensor<F>>, Vec<Tensor<F>>) {
        let x = &cache.input;
        let (n, steps) = (x.shape[0], x.shape[1]);
        let u = self.units;

        let mut d_wih = Tensor::zeros(&[4 * u, self.in_dim]);
        let mut d_whh = Tensor::zeros(&[4 * u, u]);
        let mut d_bias = Tensor::zeros(&[4 * u]);
        let mut d_input = want_input_grad.then(|| Tensor::zeros(&x.shape));

        let mut dh = vec![F::ZERO; n * u]; // running dL/dh_t
        let mut dc = vec![F::ZERO; n * u]; // running dL/dc_t
        let mut dz = vec![F::ZERO; n * 4 * u];
        let mut scratch = vec![F::ZERO; d_wih.numel().max(d_whh.numel()).max(n * u.max(self.in_dim))];

        for t in (0..steps).rev() {
            // add this step's share of the output gradient
            if self.return_sequences {
                for s in 0..n {
                    let src = (s * steps + t) * u;
                    for j in 0..u {
                        dh[s * u + j] += grad.data[src + j];
                    }
                }
            } else if t == steps - 1 {
                for (d, &g) in dh.iter_mut().zip(&grad.data) {
                    *d += g;
                }
            }

            let gate = &cache.gates[t];
            let tanh_t = &cache.cell_tanh[t];
            for s in 0..n {
                let gb = s * 4 * u;
                for j in 0..u {
                    let i_g = gate.data[gb + j];
                    let f_g = gate.data[gb + u + j];
                    let g_g = gate.data[gb + 2 * u + j];
                    let o_g = gate.data[gb + 3 * u + j];
                    let ct = tanh_t.data[s * u + j];
                    let dh_v = dh[s * u + j];
                    let mut dc_v = dc[s * u + j] + dh_v * o_g * (F::ONE - ct * ct);
                    let c_prev = if t == 0 {
                        F::ZERO
                    } else {
                        cache.cells[t - 1].data[s * u + j]
                    };
                    let d_i = dc_v * g_g;
                    let d_f = dc_v * c_prev;
                    let d_g = dc_v * i_g;
                    let d_o = dh_v * ct;
                    // through the gate nonlinearities
                    dz[gb + j] = d_i * i_g * (F::ONE - i_g);
                    dz[gb + u + j] = d_f * f_g * (F::ONE - f_g);
                    dz[gb + 2 * u + j] = d_g * (F::ONE - g_g * g_g);
                    dz[gb + 3 * u + j] = d_o * o_g * (F::ONE - o_g);
                    // pass cell gradient to t-1
                    dc_v *= f_g;
                    dc[s * u + j] = dc_v;
                }
            }

            // x_t and h_{t-1} views
            let mut x_t = vec![F::ZERO; n * self.in_dim];
            for s in 0..n {
                let src = (s * steps + t) * self.in_dim;
                x_t[s * self.in_dim..(s + 1) * self.in_dim]
                    .copy_from_slice(&x.data[src..src + self.in_dim]);
            }

            // parameter gradients
            let dw = &mut scratch[..4 * u * self.in_dim];
            matmul_tn(&dz, &x_t, n, 4 * u, self.in_dim, dw);
            for (acc, &v) in d_wih.data.iter_mut().zip(dw.iter()) {
                *acc += v;
            }
            if t > 0 {
                let h_prev = &cache.hidden[t - 1];
                let dw = &mut scratch[..4 * u * u];
                matmul_tn(&dz, &h_prev.data, n, 4 * u, u, dw);
                for (acc, &v) in d_whh.data.iter_mut().zip(dw.iter()) {
                    *acc += v;
                }
            }
            for s in 0..n {
                for j in 0..4 * u {
                    d_bias.data[j] += dz[s * 4 * u + j];
                }
            }

            // input gradient for this step
            if let Some(d_input) = d_input.as_mut() {
                let dx = &mut scratch[..n * self.in_dim];
                matmul_nn(&dz, &self.w_ih.data, n, 4 * u, self.in_dim, dx);
                for s in 0..n {
                    let dst = (s * steps + t) * self.in_dim;
                    d_input.data[dst..dst + self.in_dim]
                        .copy_from_slice(&dx[s * self.in_dim..(s + 1) * self.in_dim]);
                }
            }

            // hidden gradient for t-1
            let dh_prev = &mut scratch[..n * u];
            matmul_nn(&dz, &self.w_hh.data, n, 4 * u, u, dh_prev);
            dh.copy_from_slice(dh_prev);
        }

        (d_input, vec![d_wih, d_whh, d_bias])
    }
}
