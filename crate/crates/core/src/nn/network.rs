//! Network: an ordered layer stack with an optional frozen prefix.

use super::layer::{Layer, LayerCache, LayerSpec, Mode};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone)]
pub struct Network<F: Scalar> {
    pub layers: Vec<Layer<F>>,
    /// Leading layers excluded from gradient updates; they also always run
    /// in evaluation mode (no dropout, running normalisation statistics).
    frozen_prefix: usize,
    /// Bumped on every parameter mutation; caches record it so a backward
    /// pass against a stale cache is rejected.
    version: u64,
}

/// Activations retained by a forward pass for use in backward.
pub struct ForwardCache<F: Scalar> {
    version: u64,
    per_layer: Vec<LayerCache<F>>,
    pub output: Tensor<F>,
}

/// Parameter gradients, aligned with `Network::layers`. Frozen layers hold
/// `None`; each inner vector matches the layer's `params()` order.
pub struct Gradients<F: Scalar> {
    pub layers: Vec<Option<Vec<Tensor<F>>>>,
}

impl<F: Scalar> Gradients<F> {
    /// True when no layer receives a gradient (fully frozen network).
    pub fn is_empty(&self) -> bool {
        self.layers.iter().all(|g| g.is_none())
    }
}

impl<F: Scalar> Network<F> {
    pub fn new(layers: Vec<Layer<F>>) -> Self {
        Network {
            layers,
            frozen_prefix: 0,
            version: 0,
        }
    }

    pub fn frozen_prefix(&self) -> usize {
        self.frozen_prefix
    }

    /// Freezes the first `n` layers. Panics if `n` exceeds the layer count.
    pub fn set_frozen_prefix(&mut self, n: usize) {
        assert!(n <= self.layers.len());
        self.frozen_prefix = n;
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn spec(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    /// Trainable parameter count (frozen prefix excluded).
    pub fn trainable_param_count(&self) -> usize {
        self.layers[self.frozen_prefix..]
            .iter()
            .map(|l| l.param_count())
            .sum()
    }

    pub fn total_param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Deterministic evaluation forward pass.
    pub fn forward(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.run(input, Mode::Eval, None)?.output)
    }

    /// Training forward pass retaining activations; `rng` drives dropout.
    pub fn forward_training(
        &self,
        input: &Tensor<F>,
        rng: &mut Rng,
    ) -> Result<ForwardCache<F>> {
        self.run(input, Mode::Train, Some(rng))
    }

    /// Evaluation forward pass that retains activations, for gradient
    /// checking flows that must avoid dropout.
    pub fn forward_eval_cached(&self, input: &Tensor<F>) -> Result<ForwardCache<F>> {
        self.run(input, Mode::Eval, None)
    }

    fn run(
        &self,
        input: &Tensor<F>,
        mode: Mode,
        mut rng: Option<&mut Rng>,
    ) -> Result<ForwardCache<F>> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let layer_mode = if i < self.frozen_prefix {
                Mode::Eval
            } else {
                mode
            };
            let location = format!("layer {i} ({})", layer.kind_name());
            let (next, cache) = layer.forward(
                &cur,
                layer_mode,
                rng.as_mut().map(|r| &mut **r),
                &location,
            )?;
            caches.push(cache);
            cur = next;
        }
        Ok(ForwardCache {
            version: self.version,
            per_layer: caches,
            output: cur,
        })
    }

    /// Reverse-mode pass from a gradient with respect to the network
    /// output. Returns gradients for unfrozen layers only.
    pub fn backward(
        &self,
        cache: &ForwardCache<F>,
        output_grad: &Tensor<F>,
    ) -> Result<Gradients<F>> {
        self.backward_from(cache, self.layers.len(), output_grad)
    }

    /// Reverse-mode pass injecting `grad` as the gradient flowing into
    /// layer `from` (exclusive); `from == layers.len()` starts at the
    /// output. The fused softmax/cross-entropy path uses `from = len - 1`.
    pub fn backward_from(
        &self,
        cache: &ForwardCache<F>,
        from: usize,
        grad: &Tensor<F>,
    ) -> Result<Gradients<F>> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        let mut grads: Vec<Option<Vec<Tensor<F>>>> = (0..self.layers.len()).map(|_| None).collect();
        let mut g = grad.clone();
        for i in (self.frozen_prefix..from).rev() {
            let want_input = i > self.frozen_prefix;
            let (dx, pg) = self.layers[i].backward(&cache.per_layer[i], &g, want_input);
            grads[i] = Some(pg);
            match dx {
                Some(dx) => g = dx,
                None => break,
            }
        }
        Ok(Gradients { layers: grads })
    }

    /// Applies the running-statistics updates proposed by a training-mode
    /// forward pass (normalisation layers outside the frozen prefix).
    pub fn apply_norm_updates(&mut self, cache: &ForwardCache<F>) {
        for (layer, c) in self.layers[self.frozen_prefix..]
            .iter_mut()
            .zip(&cache.per_layer[self.frozen_prefix..])
        {
            layer.apply_norm_updates(c);
        }
    }

    /// Splits the network at the frozen boundary: (frozen part, trainable
    /// tail). Used to pre-compute activations once when only a head trains.
    pub fn split_at_frozen(self) -> (Network<F>, Network<F>) {
        let mut layers = self.layers;
        let tail = layers.split_off(self.frozen_prefix);
        let mut base = Network::new(layers);
        base.frozen_prefix = base.layers.len();
        (base, Network::new(tail))
    }

    /// Concatenates `base` (frozen) and `tail` (trainable) back into one
    /// network whose frozen prefix covers `base`.
    pub fn join_frozen(base: Network<F>, tail: Network<F>) -> Network<F> {
        let mut layers = base.layers;
        let boundary = layers.len();
        layers.extend(tail.layers);
        let mut net = Network::new(layers);
        net.frozen_prefix = boundary;
        net.version = 0;
        net
    }

    /// Flat snapshot of all parameters (used by tests to assert freezing).
    pub fn snapshot_params(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .map(|l| {
                l.params()
                    .iter()
                    .flat_map(|t| t.data.iter().map(|v| v.to_f64()))
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dense::DenseLayer;
    use crate::nn::layer::Init;

    fn dense_softmax() -> Network<f64> {
        let mut rng = Rng::seed_from(1);
        let mut dense = DenseLayer::new(3, 2, Init::GlorotUniform, &mut rng);
        dense.weight = Tensor::zeros(&[2, 3]);
        dense.bias = Tensor::zeros(&[2]);
        Network::new(vec![Layer::Dense(dense), Layer::Softmax { dim: 2 }])
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let net = dense_softmax();
        let out = net
            .forward(&Tensor::from_vec(&[1, 3], vec![0.3, -1.0, 2.5]))
            .unwrap();
        assert!((out.data[0] - 0.5).abs() < 1e-12);
        assert!((out.data[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn maxpool_takes_block_max() {
        let net: Network<f64> = Network::new(vec![Layer::MaxPool]);
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let out = net.forward(&x).unwrap();
        assert_eq!(out.shape, vec![1, 1, 1, 1]);
        assert_eq!(out.data, vec![4.0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let net: Network<f64> = Network::new(vec![Layer::Relu]);
        let out = net
            .forward(&Tensor::from_vec(&[1, 2], vec![-1.0, 2.0]))
            .unwrap();
        assert_eq!(out.data, vec![0.0, 2.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one_with_huge_logits() {
        let net: Network<f64> = Network::new(vec![Layer::Softmax { dim: 4 }]);
        let x = Tensor::from_vec(&[2, 4], vec![1e3, -1e3, 5e2, 0.0, -1e3, -1e3, -1e3, -1e3]);
        let out = net.forward(&x).unwrap();
        for row in out.data.chunks(4) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "sum {s}");
            assert!(row.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn shape_error_names_layer() {
        let net = dense_softmax();
        let err = net
            .forward(&Tensor::from_vec(&[1, 4], vec![0.0; 4]))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 0"), "{msg}");
        assert!(msg.contains("dense"), "{msg}");
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = Rng::seed_from(2);
        let dense = DenseLayer::new(2, 2, Init::GlorotUniform, &mut rng);
        let mut net = Network::new(vec![Layer::Dense(dense), Layer::Softmax { dim: 2 }]);
        let x = Tensor::from_vec(&[1, 2], vec![0.5, -0.5]);
        let cache = net.forward_eval_cached(&x).unwrap();
        net.bump_version();
        let g = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]);
        match net.backward(&cache, &g) {
            Err(Error::StaleCache) => {}
            other => panic!("expected stale-cache error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn fully_frozen_network_produces_no_gradients() {
        let mut rng = Rng::seed_from(3);
        let dense = DenseLayer::new(2, 2, Init::GlorotUniform, &mut rng);
        let mut net = Network::new(vec![Layer::Dense(dense), Layer::Softmax { dim: 2 }]);
        net.set_frozen_prefix(2);
        let x = Tensor::from_vec(&[1, 2], vec![0.5, -0.5]);
        let cache = net.forward_eval_cached(&x).unwrap();
        let g = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]);
        let grads = net.backward(&cache, &g).unwrap();
        assert!(grads.is_empty());
    }

    #[test]
    fn dropout_off_forward_is_pure() {
        let net: Network<f64> = Network::new(vec![Layer::Dropout { rate: 0.4 }]);
        let x = Tensor::from_vec(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.data, x.data);
    }
}
