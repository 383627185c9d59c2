//! Elastic-net logistic regression fitted by accelerated proximal gradient
//! descent (FISTA with the l1 part handled by soft thresholding).

/// Convergence tolerance on the parameter update.
const TOL: f64 = 1e-6;
const MAX_ITERS: usize = 20_000;

pub struct LogisticRegression {
    weights: Vec<f64>,
    bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticRegression {
    /// Minimises mean log-loss + (1/reg_strength) * (l1 |w| + l2/2 |w|^2).
    /// The bias is unregularised.
    pub fn fit(
        inputs: &[Vec<f64>],
        labels: &[bool],
        reg_strength: f64,
        l1_weight: f64,
        l2_weight: f64,
    ) -> Self {
        let n = inputs.len();
        let dim = inputs[0].len();
        let lambda = 1.0 / reg_strength;
        let l1 = lambda * l1_weight;
        let l2 = lambda * l2_weight;

        // Lipschitz bound of the smooth part: |X|_F^2 / (4 n) + l2
        let xsq: f64 = inputs
            .iter()
            .map(|x| x.iter().map(|v| v * v).sum::<f64>())
            .sum();
        let lip = xsq / (4.0 * n as f64) + l2 + 1e-12;
        let step = 1.0 / lip;

        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        // momentum iterates
        let mut wy = w.clone();
        let mut by = b;
        let mut t_momentum = 1.0f64;

        let mut grad = vec![0.0; dim];
        for _ in 0..MAX_ITERS {
            // gradient of the smooth part at the momentum point
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (x, &label) in inputs.iter().zip(labels) {
                let z: f64 = x.iter().zip(&wy).map(|(xi, wi)| xi * wi).sum::<f64>() + by;
                let err = sigmoid(z) - f64::from(u8::from(label));
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += err * xi;
                }
                grad_b += err;
            }
            let inv_n = 1.0 / n as f64;
            for (g, wi) in grad.iter_mut().zip(&wy) {
                *g = *g * inv_n + l2 * wi;
            }
            grad_b *= inv_n;

            // proximal step with soft thresholding
            let mut w_next = vec![0.0; dim];
            let threshold = step * l1;
            for i in 0..dim {
                let v = wy[i] - step * grad[i];
                w_next[i] = if v > threshold {
                    v - threshold
                } else if v < -threshold {
                    v + threshold
                } else {
                    0.0
                };
            }
            let b_next = by - step * grad_b;

            let delta = w_next
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b).abs())
                .fold((b_next - b).abs(), f64::max);

            // momentum restart keeps FISTA stable on this non-smooth mix
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_momentum * t_momentum).sqrt());
            let gamma = (t_momentum - 1.0) / t_next;
            for i in 0..dim {
                wy[i] = w_next[i] + gamma * (w_next[i] - w[i]);
            }
            by = b_next + gamma * (b_next - b);
            t_momentum = t_next;
            w = w_next;
            b = b_next;

            if delta < TOL {
                break;
            }
        }

        LogisticRegression { weights: w, bias: b }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_proba(&self, input: &[f64]) -> f64 {
        let z: f64 = input
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}
