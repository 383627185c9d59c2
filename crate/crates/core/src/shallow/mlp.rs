//! Small multilayer perceptron: one relu hidden layer and a two-way
//! softmax head, trained for a fixed 200 epochs by Adam with l2 weight
//! decay. Kept self-contained so the shallow family does not depend on the
//! deep-network kernels.

use crate::rng::{mix, Rng};

const EPOCHS: usize = 200;
const BATCH: usize = 32;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

pub struct MlpModel {
    w1: Vec<f64>, // hidden x dim
    b1: Vec<f64>,
    w2: Vec<f64>, // 2 x hidden
    b2: Vec<f64>,
    dim: usize,
    hidden: usize,
}

impl MlpModel {
    pub fn fit(
        inputs: &[Vec<f64>],
        labels: &[bool],
        hidden: usize,
        l2_weight: f64,
        learning_rate: f64,
        seed: u64,
    ) -> Self {
        let n = inputs.len();
        let dim = inputs[0].len();
        let mut rng = Rng::seed_from(mix(seed, &[0x317]));
        let he = (6.0 / dim as f64).sqrt();
        let glorot = (6.0 / (hidden + 2) as f64).sqrt();
        let mut model = MlpModel {
            w1: (0..hidden * dim).map(|_| rng.uniform(-he, he)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..2 * hidden).map(|_| rng.uniform(-glorot, glorot)).collect(),
            b2: vec![0.0; 2],
            dim,
            hidden,
        };

        let n_params = model.w1.len() + model.b1.len() + model.w2.len() + model.b2.len();
        let mut m = vec![0.0; n_params];
        let mut v = vec![0.0; n_params];
        let mut grad = vec![0.0; n_params];
        let mut step = 0u64;

        let mut order: Vec<usize> = (0..n).collect();
        for _epoch in 0..EPOCHS {
            rng.shuffle(&mut order);
            for chunk in order.chunks(BATCH) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    model.accumulate(&inputs[i], labels[i], scale, &mut grad);
                }
                // l2 decay on weights only
                let (w1n, b1n, w2n) = (model.w1.len(), model.b1.len(), model.w2.len());
                for (g, w) in grad[..w1n].iter_mut().zip(&model.w1) {
                    *g += l2_weight * w;
                }
                for (g, w) in grad[w1n + b1n..w1n + b1n + w2n].iter_mut().zip(&model.w2) {
                    *g += l2_weight * w;
                }

                step += 1;
                let corr1 = 1.0 - BETA1.powi(step as i32);
                let corr2 = 1.0 - BETA2.powi(step as i32);
                let params = model
                    .w1
                    .iter_mut()
                    .chain(model.b1.iter_mut())
                    .chain(model.w2.iter_mut())
                    .chain(model.b2.iter_mut());
                for ((p, g), (mi, vi)) in params
                    .zip(&grad)
                    .zip(m.iter_mut().zip(v.iter_mut()))
                {
                    *mi = BETA1 * *mi + (1.0 - BETA1) * g;
                    *vi = BETA2 * *vi + (1.0 - BETA2) * g * g;
                    let m_hat = *mi / corr1;
                    let v_hat = *vi / corr2;
                    *p -= learning_rate * m_hat / (v_hat.sqrt() + EPS);
                }
            }
        }
        model
    }

    /// Adds one sample's loss gradient (times `scale`) into `grad`, laid
    /// out as [w1, b1, w2, b2].
    fn accumulate(&self, x: &[f64], label: bool, scale: f64, grad: &mut [f64]) {
        let (h, p) = self.forward(x);
        let y = usize::from(label);
        // d loss / d logits through softmax
        let dlogit = [p[0] - f64::from(u8::from(y == 0)), p[1] - f64::from(u8::from(y == 1))];

        let (w1n, b1n, w2n) = (self.w1.len(), self.b1.len(), self.w2.len());
        let (g_w1, rest) = grad.split_at_mut(w1n);
        let (g_b1, rest) = rest.split_at_mut(b1n);
        let (g_w2, g_b2) = rest.split_at_mut(w2n);

        for c in 0..2 {
            let d = dlogit[c] * scale;
            for j in 0..self.hidden {
                g_w2[c * self.hidden + j] += d * h[j];
            }
            g_b2[c] += d;
        }
        for j in 0..self.hidden {
            if h[j] <= 0.0 {
                continue;
            }
            let dh = (dlogit[0] * self.w2[j] + dlogit[1] * self.w2[self.hidden + j]) * scale;
            for (g, xi) in g_w1[j * self.dim..(j + 1) * self.dim].iter_mut().zip(x) {
                *g += dh * xi;
            }
            g_b1[j] += dh;
        }
    }

    /// Hidden activations and softmax output.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, [f64; 2]) {
        let mut h = vec![0.0; self.hidden];
        for j in 0..self.hidden {
            let z: f64 = self.w1[j * self.dim..(j + 1) * self.dim]
                .iter()
                .zip(x)
                .map(|(w, xi)| w * xi)
                .sum::<f64>()
                + self.b1[j];
            h[j] = z.max(0.0);
        }
        let mut logits = [self.b2[0], self.b2[1]];
        for c in 0..2 {
            logits[c] += self.w2[c * self.hidden..(c + 1) * self.hidden]
                .iter()
                .zip(&h)
                .map(|(w, hj)| w * hj)
                .sum::<f64>();
        }
        let max = logits[0].max(logits[1]);
        let e0 = (logits[0] - max).exp();
        let e1 = (logits[1] - max).exp();
        (h, [e0 / (e0 + e1), e1 / (e0 + e1)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn predict_proba(&self, input: &[f64]) -> f64 {
        self.forward(input).1[1]
    }
}
