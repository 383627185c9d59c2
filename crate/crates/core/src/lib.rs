//! # vocalscreen
//!
//! A desk-scale audio screening pipeline. Recordings are loaded, resampled
//! and silence-trimmed, converted into fixed-dimension acoustic feature
//! matrices, and classified either by deep networks (optionally pre-trained
//! on a four-class auxiliary task and fine-tuned through a small replacement
//! head) or by shallow classifiers consuming 512-dimensional bottleneck
//! vectors extracted from a frozen backbone. Evaluation runs a
//! subject-grouped nested cross-validation with ROC/AUC scoring and
//! equal-error-rate thresholds.
//!
//! The crate is organised along the pipeline stages:
//!
//! - [`audio`]: WAV input/output, resampling, silence trimming, manifests
//! - [`features`]: fixed-segment framing and spectral feature extraction
//! - [`balance`]: minority-class oversampling in feature space
//! - [`nn`]: small dense/convolutional/recurrent kernels with reverse-mode
//!   differentiation
//! - [`transfer`]: the three deep architectures, pre-training, head
//!   replacement and bottleneck extraction
//! - [`shallow`]: logistic regression, SVM, KNN and MLP classifiers
//! - [`eval`]: cross-validation plans, grid search, feature selection and
//!   all scoring
//! - [`synth`]: a synthetic benchmark corpus generator used by the
//!   acceptance suite and the `synth` CLI command

pub mod audio;
pub mod balance;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod rng;
pub mod shallow;
pub mod synth;
pub mod transfer;

pub use error::{Error, Result};
