//! Minimal neural-network kernels: dense, convolutional and recurrent
//! layers with reverse-mode differentiation, an Adam/SGD trainer, finite
//! difference gradient checking and a binary checkpoint format.

pub mod checkpoint;
mod conv;
mod dense;
mod gradcheck;
mod layer;
mod lstm;
mod network;
mod norm;
mod residual;
mod tensor;
mod train;

pub use conv::ConvLayer;
pub use dense::DenseLayer;
pub use gradcheck::{grad_check, GRAD_CHECK_STEP};
pub use layer::{Init, Layer, LayerSpec, Mode, ResidualKind};
pub use lstm::LstmLayer;
pub use network::{ForwardCache, Gradients, Network};
pub use norm::BatchNormLayer;
pub use residual::ResidualBlock;
pub use tensor::{Scalar, Tensor};
pub use train::{
    accuracy, backward_cross_entropy, ce_softmax_grad, cross_entropy, train, Loss,
    OptimizerKind, TrainConfig,
};
