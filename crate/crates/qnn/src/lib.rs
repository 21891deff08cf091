//! Classical NN layers, the composite QNN layer, and the LeNet model
//! family (classical plus four quantum variants), built on the autodiff
//! tape so every forward pass is differentiable with respect to both
//! parameters and input pixels.

mod checkpoint;
mod error;
mod layers;
mod model;

pub use checkpoint::{load_qdl1, save_qdl1};
pub use error::{QnnError, Result};
pub use layers::{
    avgpool2, conv2d, dense, qnn_layer_forward, softmax_cross_entropy, Conv2DLayer, DenseLayer,
    QNNLayer,
};
pub use model::{
    build_model, Model, ModelConfig, ModelParams, Observable, Variant, N_QUBITS,
};
