//! Soft-margin SVM with an RBF kernel, trained by sequential minimal
//! optimisation, plus Platt scaling fitted on the training decision values
//! so the model emits probabilities.

const SMO_TOL: f64 = 1e-3;
const SMO_EPS: f64 = 1e-8;
const MAX_PASSES: usize = 40;

pub struct SvmModel {
    support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i for each support vector.
    coefficients: Vec<f64>,
    bias: f64,
    kernel_coef: f64,
    /// Platt scaling parameters: p = sigmoid(-(a * f + b)).
    platt_a: f64,
    platt_b: f64,
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl SvmModel {
    pub fn fit(inputs: &[Vec<f64>], labels: &[bool], reg_strength: f64, kernel_coef: f64) -> Self {
        let n = inputs.len();
        let c = reg_strength;
        let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();

        // cache the kernel matrix; training sets stay desk-scale
        let kernel: Vec<f64> = {
            use rayon::prelude::*;
            let mut k = vec![0.0; n * n];
            k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = rbf(&inputs[i], &inputs[j], kernel_coef);
                }
            });
            k
        };

        let mut alpha = vec![0.0f64; n];
        let mut bias = 0.0f64;
        // error cache: e[k] = decision(k) - y[k]; all alphas start at 0
        let mut errors: Vec<f64> = y.iter().map(|&yk| -yk).collect();

        // simplified SMO with deterministic max-|e_i - e_j| partner choice
        let mut quiet_sweeps = 0;
        let mut sweeps = 0usize;
        while quiet_sweeps < 2 && sweeps < MAX_PASSES * 10 {
            sweeps += 1;
            let mut changed = 0;
            for i in 0..n {
                let e_i = errors[i];
                let violates = (y[i] * e_i < -SMO_TOL && alpha[i] < c)
                    || (y[i] * e_i > SMO_TOL && alpha[i] > 0.0);
                if !violates {
                    continue;
                }
                // pick the partner with the largest |e_i - e_j|
                let mut j = usize::MAX;
                let mut gap_best = -1.0;
                for (cand, &e_j) in errors.iter().enumerate() {
                    if cand == i {
                        continue;
                    }
                    let gap = (e_i - e_j).abs();
                    if gap > gap_best {
                        gap_best = gap;
                        j = cand;
                    }
                }
                let e_j = errors[j];

                let (alpha_i_old, alpha_j_old) = (alpha[i], alpha[j]);
                let (lo, hi) = if (y[i] - y[j]).abs() < f64::EPSILON {
                    (
                        (alpha_i_old + alpha_j_old - c).max(0.0),
                        (alpha_i_old + alpha_j_old).min(c),
                    )
                } else {
                    (
                        (alpha_j_old - alpha_i_old).max(0.0),
                        (c + alpha_j_old - alpha_i_old).min(c),
                    )
                };
                if hi - lo < SMO_EPS {
                    continue;
                }
                let eta = 2.0 * kernel[i * n + j] - kernel[i * n + i] - kernel[j * n + j];
                if eta >= 0.0 {
                    continue;
                }
                let mut alpha_j = alpha_j_old - y[j] * (e_i - e_j) / eta;
                alpha_j = alpha_j.clamp(lo, hi);
                if (alpha_j - alpha_j_old).abs() < SMO_EPS {
                    continue;
                }
                let alpha_i = alpha_i_old + y[i] * y[j] * (alpha_j_old - alpha_j);
                alpha[i] = alpha_i;
                alpha[j] = alpha_j;

                let d_i = y[i] * (alpha_i - alpha_i_old);
                let d_j = y[j] * (alpha_j - alpha_j_old);
                let b1 = bias - e_i - d_i * kernel[i * n + i] - d_j * kernel[i * n + j];
                let b2 = bias - e_j - d_i * kernel[i * n + j] - d_j * kernel[j * n + j];
                let new_bias = if alpha_i > 0.0 && alpha_i < c {
                    b1
                } else if alpha_j > 0.0 && alpha_j < c {
                    b2
                } else {
                    0.5 * (b1 + b2)
                };
                let d_b = new_bias - bias;
                bias = new_bias;
                for (k, e) in errors.iter_mut().enumerate() {
                    *e += d_i * kernel[i * n + k] + d_j * kernel[j * n + k] + d_b;
                }
                changed += 1;
            }
            if changed == 0 {
                quiet_sweeps += 1;
            } else {
                quiet_sweeps = 0;
            }
        }

        // training-set decision values feed the Platt fit
        let decisions: Vec<f64> = (0..n).map(|i| errors[i] + y[i]).collect();
        let (platt_a, platt_b) = platt_fit(&decisions, labels);

        let mut support_vectors = Vec::new();
        let mut coefficients = Vec::new();
        for i in 0..n {
            if alpha[i] > SMO_EPS {
                support_vectors.push(inputs[i].clone());
                coefficients.push(alpha[i] * y[i]);
            }
        }

        SvmModel {
            support_vectors,
            coefficients,
            bias,
            kernel_coef,
            platt_a,
            platt_b,
        }
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, |v| v.len())
    }

    pub fn decision(&self, input: &[f64]) -> f64 {
        let mut f = self.bias;
        for (sv, &coef) in self.support_vectors.iter().zip(&self.coefficients) {
            f += coef * rbf(sv, input, self.kernel_coef);
        }
        f
    }

    pub fn predict_proba(&self, input: &[f64]) -> f64 {
        let f = self.decision(input);
        let z = self.platt_a * f + self.platt_b;
        // p = 1 / (1 + exp(a f + b))
        if z >= 0.0 {
            (-z).exp() / (1.0 + (-z).exp())
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

/// Fits the sigmoid p(y=1|f) = 1 / (1 + exp(a f + b)) by Newton iteration
/// with the usual regularised targets.
fn platt_fit(decisions: &[f64], labels: &[bool]) -> (f64, f64) {
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    let t_neg = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = labels
        .iter()
        .map(|&l| if l { t_pos } else { t_neg })
        .collect();

    let mut a = 0.0f64;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let min_step = 1e-10;
    let sigma = 1e-12;

    let value = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&targets)
            .map(|(&f, &t)| {
                let z = a * f + b;
                // cross-entropy of p = 1/(1+e^z) against target t
                if z >= 0.0 {
                    t * z + (1.0 + (-z).exp()).ln()
                } else {
                    (t - 1.0) * z + (1.0 + z.exp()).ln()
                }
            })
            .sum()
    };

    let mut best = value(a, b);
    for _ in 0..100 {
        // gradient and hessian
        let (mut g_a, mut g_b, mut h_aa, mut h_ab, mut h_bb) = (0.0, 0.0, sigma, 0.0, sigma);
        for (&f, &t) in decisions.iter().zip(&targets) {
            let z = a * f + b;
            let p = if z >= 0.0 {
                (-z).exp() / (1.0 + (-z).exp())
            } else {
                1.0 / (1.0 + z.exp())
            };
            let d1 = t - p;
            let d2 = p * (1.0 - p);
            g_a += f * d1;
            g_b += d1;
            h_aa += f * f * d2;
            h_ab += f * d2;
            h_bb += d2;
        }
        if g_a.abs() < 1e-9 && g_b.abs() < 1e-9 {
            break;
        }
        let det = h_aa * h_bb - h_ab * h_ab;
        let (da, db) = (
            -(h_bb * g_a - h_ab * g_b) / det,
            -(-h_ab * g_a + h_aa * g_b) / det,
        );
        // backtracking line search on the Newton direction
        let mut step = 1.0;
        loop {
            let (a_new, b_new) = (a + step * da, b + step * db);
            let v = value(a_new, b_new);
            if v < best + 1e-12 {
                a = a_new;
                b = b_new;
                best = v;
                break;
            }
            step *= 0.5;
            if step < min_step {
                return (a, b);
            }
        }
    }
    (a, b)
}
