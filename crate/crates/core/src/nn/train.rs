//! Mini-batch training loop with Adam or plain SGD.

use super::layer::Layer;
use super::network::{ForwardCache, Gradients, Network};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::{mix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub loss: Loss,
}

impl TrainConfig {
    pub fn new(batch_size: usize, epochs: usize, learning_rate: f64, seed: u64) -> Self {
        assert!(batch_size >= 1 && epochs >= 1 && learning_rate > 0.0);
        TrainConfig {
            batch_size,
            epochs,
            learning_rate,
            optimizer: OptimizerKind::Adam,
            seed,
            loss: Loss::CrossEntropy,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam/SGD state over the unfrozen parameter tensors.
pub struct Optimizer<F: Scalar> {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    /// Per unfrozen layer, per parameter: first and second moments.
    moments: Vec<Vec<(Tensor<F>, Tensor<F>)>>,
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(net: &Network<F>, kind: OptimizerKind, learning_rate: f64) -> Self {
        let moments = net.layers[net.frozen_prefix()..]
            .iter()
            .map(|l| {
                l.params()
                    .iter()
                    .map(|p| (Tensor::zeros(&p.shape), Tensor::zeros(&p.shape)))
                    .collect()
            })
            .collect();
        Optimizer {
            kind,
            learning_rate,
            step: 0,
            moments,
        }
    }

    pub fn apply(&mut self, net: &mut Network<F>, grads: &Gradients<F>) {
        self.step += 1;
        let frozen = net.frozen_prefix();
        let lr = F::from_f64(self.learning_rate);
        for (idx, layer) in net.layers.iter_mut().enumerate().skip(frozen) {
            let Some(layer_grads) = &grads.layers[idx] else {
                continue;
            };
            let state = &mut self.moments[idx - frozen];
            for ((param, grad), (m, v)) in layer
                .params_mut()
                .into_iter()
                .zip(layer_grads)
                .zip(state.iter_mut())
            {
                match self.kind {
                    OptimizerKind::Sgd => {
                        for (p, &g) in param.data.iter_mut().zip(&grad.data) {
                            *p -= lr * g;
                        }
                    }
                    OptimizerKind::Adam => {
                        let b1 = F::from_f64(ADAM_BETA1);
                        let b2 = F::from_f64(ADAM_BETA2);
                        let eps = F::from_f64(ADAM_EPS);
                        let corr1 = F::from_f64(1.0 - ADAM_BETA1.powi(self.step as i32));
                        let corr2 = F::from_f64(1.0 - ADAM_BETA2.powi(self.step as i32));
                        for ((p, &g), (m, v)) in param
                            .data
                            .iter_mut()
                            .zip(&grad.data)
                            .zip(m.data.iter_mut().zip(v.data.iter_mut()))
                        {
                            *m = b1 * *m + (F::ONE - b1) * g;
                            *v = b2 * *v + (F::ONE - b2) * g * g;
                            let m_hat = *m / corr1;
                            let v_hat = *v / corr2;
                            *p -= lr * m_hat / (v_hat.sqrt() + eps);
                        }
                    }
                }
            }
        }
        net.bump_version();
    }
}

/// Mean cross-entropy of softmax outputs against class indices. A zero
/// predicted probability for a true class yields an infinite loss, which
/// the training loop reports as a divergence.
pub fn cross_entropy<F: Scalar>(probs: &Tensor<F>, labels: &[usize]) -> f64 {
    let width = *probs.shape.last().unwrap();
    let mut total = 0.0;
    for (row, &label) in probs.data.chunks(width).zip(labels) {
        total -= row[label].to_f64().ln();
    }
    total / labels.len() as f64
}

/// Gradient of mean cross-entropy with respect to the logits feeding the
/// final softmax: (p - y) / n. Using the fused form keeps the backward pass
/// stable when predicted probabilities saturate.
pub fn ce_softmax_grad<F: Scalar>(probs: &Tensor<F>, labels: &[usize]) -> Tensor<F> {
    let width = *probs.shape.last().unwrap();
    let scale = F::from_f64(1.0 / labels.len() as f64);
    let mut grad = probs.clone();
    for (row, &label) in grad.data.chunks_mut(width).zip(labels) {
        row[label] -= F::ONE;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    grad
}

/// Runs backward for a cross-entropy loss, using the fused path when the
/// network ends in softmax.
pub fn backward_cross_entropy<F: Scalar>(
    net: &Network<F>,
    cache: &ForwardCache<F>,
    labels: &[usize],
) -> Result<Gradients<F>> {
    let ends_in_softmax = matches!(net.layers.last(), Some(Layer::Softmax { .. }));
    let grad = ce_softmax_grad(&cache.output, labels);
    if ends_in_softmax {
        net.backward_from(cache, net.layers.len() - 1, &grad)
    } else {
        // direct gradient of CE with respect to raw outputs
        let width = *cache.output.shape.last().unwrap();
        let scale = 1.0 / labels.len() as f64;
        let mut g = Tensor::zeros(&cache.output.shape);
        for ((row, &label), out_row) in g
            .data
            .chunks_mut(width)
            .zip(labels)
            .zip(cache.output.data.chunks(width))
        {
            let p = out_row[label].to_f64().max(1e-12);
            row[label] = F::from_f64(-scale / p);
        }
        net.backward(cache, &g)
    }
}

/// One epoch's sample order, derived from the shared shuffle stream.
fn epoch_order(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order
}

/// Trains a network on (input, class index) pairs.
///
/// Batches are reshuffled every epoch from the seeded stream; the returned
/// history holds the mean batch loss per epoch (no monotonicity is
/// guaranteed or enforced). Training aborts with a diagnostic if the loss
/// leaves the finite range.
pub fn train<F: Scalar>(
    net: &mut Network<F>,
    data: &[(Tensor<F>, usize)],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || cfg.learning_rate <= 0.0 {
        return Err(Error::Validation(format!(
            "invalid training config: epochs={} batch_size={} learning_rate={}",
            cfg.epochs, cfg.batch_size, cfg.learning_rate
        )));
    }
    let mut opt = Optimizer::new(net, cfg.optimizer, cfg.learning_rate);
    let mut shuffle_rng = Rng::seed_from(mix(cfg.seed, &[0x5u64]));
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let order = epoch_order(data.len(), &mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let samples: Vec<&Tensor<F>> = chunk.iter().map(|&i| &data[i].0).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| data[i].1).collect();
            let x = Tensor::stack(&samples);
            let mut dropout_rng =
                Rng::seed_from(mix(cfg.seed, &[1, epoch as u64, batch_idx as u64]));
            let cache = net.forward_training(&x, &mut dropout_rng)?;
            let loss = cross_entropy(&cache.output, &labels);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let grads = backward_cross_entropy(net, &cache, &labels)?;
            opt.apply(net, &grads);
            net.apply_norm_updates(&cache);
            epoch_loss += loss;
            batches += 1;
        }
        history.push(epoch_loss / batches as f64);
    }
    Ok(history)
}

/// Classification accuracy of an evaluation forward pass.
pub fn accuracy<F: Scalar>(net: &Network<F>, data: &[(Tensor<F>, usize)]) -> Result<f64> {
    let mut correct = 0usize;
    for (x, label) in data {
        let sample_refs = [x];
        let batched = Tensor::stack(&sample_refs);
        let out = net.forward(&batched)?;
        let width = *out.shape.last().unwrap();
        let pred = out.data[..width]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        if pred == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
