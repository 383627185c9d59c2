//! Fully connected layer. Inputs with more than two dimensions are
//! flattened per sample, so a dense layer can directly follow a
//! convolutional stack.

use super::layer::{init_weights, Init, LayerCache};
use super::tensor::{matmul_nn, matmul_nt, matmul_tn, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone)]
pub struct DenseLayer<F: Scalar> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// (out_dim, in_dim)
    pub weight: Tensor<F>,
    /// (out_dim)
    pub bias: Tensor<F>,
}

impl<F: Scalar> DenseLayer<F> {
    pub fn new(in_dim: usize, out_dim: usize, init: Init, rng: &mut Rng) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weight: init_weights(&[out_dim, in_dim], in_dim, out_dim, init, rng),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    /// Builds a layer around existing tensors (checkpoint loading).
    pub fn from_params(weight: Tensor<F>, bias: Tensor<F>) -> Self {
        assert_eq!(weight.shape.len(), 2);
        DenseLayer {
            in_dim: weight.shape[1],
            out_dim: weight.shape[0],
            weight,
            bias,
        }
    }

    pub fn forward(
        &self,
        x: &Tensor<F>,
        location: &str,
    ) -> Result<(Tensor<F>, LayerCache<F>)> {
        let n = x.batch();
        let flat = x.row_len();
        if flat != self.in_dim {
            return Err(Error::Shape {
                location: location.to_string(),
                detail: format!(
                    "dense expects {} inputs per sample, got {:?}",
                    self.in_dim, x.shape
                ),
            });
        }
        let mut out = Tensor::zeros(&[n, self.out_dim]);
        matmul_nt(
            &x.data,
            &self.weight.data,
            n,
            self.in_dim,
            self.out_dim,
            &mut out.data,
        );
        for row in out.data.chunks_mut(self.out_dim) {
            for (o, &b) in row.iter_mut().zip(&self.bias.data) {
                *o += b;
            }
        }
        Ok((out, LayerCache::Dense { input: x.clone() }))
    }

    pub fn backward(
        &self,
        input: &Tensor<F>,
        grad: &Tensor<F>,
        want_input_grad: bool,
    ) -> (Option<Tensor<F>>, Vec<Tensor<F>>) {
        let n = input.batch();
        let mut d_weight = Tensor::zeros(&[self.out_dim, self.in_dim]);
        matmul_tn(
            &grad.data,
            &input.data,
            n,
            self.out_dim,
            self.in_dim,
            &mut d_weight.data,
        );
        let mut d_bias = Tensor::zeros(&[self.out_dim]);
        for row in grad.data.chunks(self.out_dim) {
            for (b, &g) in d_bias.data.iter_mut().zip(row) {
                *b += g;
            }
        }
        let d_input = want_input_grad.then(|| {
            let mut dx = Tensor::zeros(&[n, self.in_dim]);
            matmul_nn(
                &grad.data,
                &self.weight.data,
                n,
                self.out_dim,
                self.in_dim,
                &mut dx.data,
            );
            dx.reshaped(&input.shape)
        });
        (d_input, vec![d_weight, d_bias])
    }
}
