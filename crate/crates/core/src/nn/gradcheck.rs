//! Finite-difference verification of the reverse-mode gradients.

use super::network::Network;
use super::tensor::Tensor;
use super::train::{backward_cross_entropy, cross_entropy};
use crate::error::Result;
use crate::rng::Rng;

/// Central-difference step; chosen for f64 evaluation.
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Parameter entries sampled per tensor.
const ENTRIES_PER_TENSOR: usize = 120;

/// Compares analytic gradients against central finite differences of the
/// cross-entropy loss and returns the worst relative error.
///
/// Runs in 64-bit precision on the training-mode forward path (batch
/// normalisation uses batch statistics). Networks containing dropout are
/// rejected: a stochastic mask has no well-defined finite difference.
pub fn grad_check(
    net: &mut Network<f64>,
    input: &Tensor<f64>,
    labels: &[usize],
    seed: u64,
) -> Result<f64> {
    assert!(
        !net.layers.iter().any(|l| matches!(
            l,
            super::layer::Layer::Dropout { .. }
        )),
        "grad_check is undefined for dropout layers"
    );
    let mut rng = Rng::seed_from(seed);

    let loss_of = |net: &Network<f64>| -> Result<f64> {
        // training-mode path without dropout is deterministic; the rng goes
        // unused but keeps the signature honest
        let mut unused = Rng::seed_from(0);
        let cache = net.forward_training(input, &mut unused)?;
        Ok(cross_entropy(&cache.output, labels))
    };

    let mut dummy = Rng::seed_from(0);
    let cache = net.forward_training(input, &mut dummy)?;
    let grads = backward_cross_entropy(net, &cache, labels)?;

    let mut worst: f64 = 0.0;
    let frozen = net.frozen_prefix();
    for layer_idx in frozen..net.layers.len() {
        let Some(layer_grads) = grads.layers[layer_idx].clone() else {
            continue;
        };
        for (param_idx, grad) in layer_grads.iter().enumerate() {
            let numel = grad.numel();
            let n_checks = numel.min(ENTRIES_PER_TENSOR);
            for _ in 0..n_checks {
                let e = rng.below(numel);
                let analytic = grad.data[e];

                let original = net.layers[layer_idx].params()[param_idx].data[e];
                net.layers[layer_idx].params_mut()[param_idx].data[e] =
                    original + GRAD_CHECK_STEP;
                let plus = loss_of(net)?;
                net.layers[layer_idx].params_mut()[param_idx].data[e] =
                    original - GRAD_CHECK_STEP;
                let minus = loss_of(net)?;
                net.layers[layer_idx].params_mut()[param_idx].data[e] = original;

                let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
    }
    Ok(worst)
}
