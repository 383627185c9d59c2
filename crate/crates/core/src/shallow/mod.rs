//! Shallow classifiers trained on primary-feature frames or on bottleneck
//! vectors: elastic-net logistic regression, an RBF-kernel SVM with Platt
//! probability calibration, k-nearest-neighbour voting and a one-hidden-
//! layer MLP.

mod knn;
mod logreg;
mod mlp;
mod svm;

pub use knn::KnnModel;
pub use logreg::LogisticRegression;
pub use mlp::MlpModel;
pub use svm::SvmModel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameter grids considered during nested cross-validation.
pub mod grid {
    /// Regularisation strengths for LR and SVM: 10^i, i = -7..=7.
    pub fn reg_strengths() -> Vec<f64> {
        (-7..=7).map(|i| 10f64.powi(i)).collect()
    }

    /// l1/l2 penalty weights: 0 to 1 in steps of 0.05.
    pub fn penalty_weights() -> Vec<f64> {
        (0..=20).map(|i| i as f64 * 0.05).collect()
    }

    /// SVM kernel coefficients: 10^i, i = -7..=7.
    pub fn kernel_coefs() -> Vec<f64> {
        (-7..=7).map(|i| 10f64.powi(i)).collect()
    }

    /// KNN neighbour counts: 10 to 100 in steps of 10.
    pub fn neighbor_counts() -> Vec<usize> {
        (1..=10).map(|i| i * 10).collect()
    }

    /// KNN tree leaf sizes: 5 to 30 in steps of 5.
    pub fn leaf_sizes() -> Vec<usize> {
        (1..=6).map(|i| i * 5).collect()
    }

    /// MLP hidden neuron counts: 10 to 100 in steps of 10.
    pub fn neuron_counts() -> Vec<usize> {
        (1..=10).map(|i| i * 10).collect()
    }

    /// MLP learning rates: 10^k, k = -2, -3, -4.
    pub fn learning_rates() -> Vec<f64> {
        vec![1e-2, 1e-3, 1e-4]
    }
}

fn close_to_any(grid: &[f64], v: f64) -> bool {
    grid.iter().any(|g| (g - v).abs() <= 1e-9 * g.abs().max(1.0))
}

/// Specification of one shallow classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum ShallowSpec {
    /// Elastic-net logistic regression: penalty strength 1 / reg_strength,
    /// mixed l1/l2 weights.
    Lr {
        reg_strength: f64,
        l1_weight: f64,
        l2_weight: f64,
    },
    /// Soft-margin SVM with kernel exp(-kernel_coef * |x - x'|^2) and
    /// C = reg_strength.
    Svm { reg_strength: f64, kernel_coef: f64 },
    /// K-nearest neighbours with tree-backed search.
    Knn { neighbors: usize, leaf_size: usize },
    /// One relu hidden layer plus two-way softmax, l2 penalty, Adam.
    Mlp {
        hidden: usize,
        l2_weight: f64,
        learning_rate: f64,
    },
}

impl ShallowSpec {
    /// Validates that every value sits on the standard search grid; pass
    /// `allow_override` to accept arbitrary values.
    pub fn validated(self, allow_override: bool) -> Result<Self> {
        if allow_override {
            return Ok(self);
        }
        let ok = match &self {
            ShallowSpec::Lr {
                reg_strength,
                l1_weight,
                l2_weight,
            } => {
                close_to_any(&grid::reg_strengths(), *reg_strength)
                    && close_to_any(&grid::penalty_weights(), *l1_weight)
                    && close_to_any(&grid::penalty_weights(), *l2_weight)
            }
            ShallowSpec::Svm {
                reg_strength,
                kernel_coef,
            } => {
                close_to_any(&grid::reg_strengths(), *reg_strength)
                    && close_to_any(&grid::kernel_coefs(), *kernel_coef)
            }
            ShallowSpec::Knn {
                neighbors,
                leaf_size,
            } => {
                grid::neighbor_counts().contains(neighbors)
                    && grid::leaf_sizes().contains(leaf_size)
            }
            ShallowSpec::Mlp {
                hidden,
                l2_weight,
                learning_rate,
            } => {
                grid::neuron_counts().contains(hidden)
                    && close_to_any(&grid::penalty_weights(), *l2_weight)
                    && close_to_any(&grid::learning_rates(), *learning_rate)
            }
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::Validation(format!(
                "{self:?} is outside the standard hyperparameter grid (override to allow)"
            )))
        }
    }
}

/// A trained shallow model.
pub enum ShallowModel {
    Lr(LogisticRegression),
    Svm(SvmModel),
    Knn(KnnModel),
    Mlp(MlpModel),
}

impl ShallowModel {
    pub fn dim(&self) -> usize {
        match self {
            ShallowModel::Lr(m) => m.dim(),
            ShallowModel::Svm(m) => m.dim(),
            ShallowModel::Knn(m) => m.dim(),
            ShallowModel::Mlp(m) => m.dim(),
        }
    }

    /// P(label = positive | input); deterministic, finite, in [0, 1].
    pub fn predict_proba(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.dim() {
            return Err(Error::Shape {
                location: "shallow predict".into(),
                detail: format!("expected {} features, got {}", self.dim(), input.len()),
            });
        }
        let p = match self {
            ShallowModel::Lr(m) => m.predict_proba(input),
            ShallowModel::Svm(m) => m.predict_proba(input),
            ShallowModel::Knn(m) => m.predict_proba(input),
            ShallowModel::Mlp(m) => m.predict_proba(input),
        };
        debug_assert!(p.is_finite(), "probability {p}");
        Ok(p.clamp(0.0, 1.0))
    }
}

/// Trains the classifier described by `spec` on binary-labelled vectors.
///
/// Requires at least two samples and both classes present. `seed` drives
/// the MLP's initialisation and shuffling; LR, SVM and KNN are
/// deterministic by construction.
pub fn train_shallow(
    spec: &ShallowSpec,
    inputs: &[Vec<f64>],
    labels: &[bool],
    seed: u64,
) -> Result<ShallowModel> {
    if inputs.len() < 2 || inputs.len() != labels.len() {
        return Err(Error::Validation(format!(
            "shallow training needs at least 2 labelled samples, got {} inputs / {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let dim = inputs[0].len();
    if inputs.iter().any(|v| v.len() != dim) {
        return Err(Error::Validation(
            "shallow training inputs must share one dimension".into(),
        ));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::Validation(
            "shallow training needs both classes present".into(),
        ));
    }
    Ok(match spec {
        ShallowSpec::Lr {
            reg_strength,
            l1_weight,
            l2_weight,
        } => ShallowModel::Lr(LogisticRegression::fit(
            inputs,
            labels,
            *reg_strength,
            *l1_weight,
            *l2_weight,
        )),
        ShallowSpec::Svm {
            reg_strength,
            kernel_coef,
        } => ShallowModel::Svm(SvmModel::fit(inputs, labels, *reg_strength, *kernel_coef)),
        ShallowSpec::Knn {
            neighbors,
            leaf_size,
        } => ShallowModel::Knn(KnnModel::fit(inputs, labels, *neighbors, *leaf_size)),
        ShallowSpec::Mlp {
            hidden,
            l2_weight,
            learning_rate,
        } => ShallowModel::Mlp(MlpModel::fit(
            inputs,
            labels,
            *hidden,
            *l2_weight,
            *learning_rate,
            seed,
        )),
    })
}

#[cfg(test)]
mod tests;
