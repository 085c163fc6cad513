//! Tensors, a recorded-graph reverse-mode engine and the layers the
//! generator and discriminator are built from.

pub mod graph;
pub mod init;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{BatchStats, Gradients, Graph, Var};
pub use init::{xavier_init, xavier_init_with};
pub use layers::{
    batchnorm_forward, conv1d_forward, dense_forward, gradient_check, l1_penalty, leaky_relu, lstm_forward, relu,
    BatchNorm, LstmWeights, Mode,
};
pub use optim::{Adam, AdamConfig};
pub use params::{Bindings, ParamId, ParamSet, Parameter};
pub use tensor::Tensor;
