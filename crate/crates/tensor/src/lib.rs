//! Dense `f32` tensors and a compact reverse-mode tape covering the layers
//! used by encoder-decoder segmentation networks: convolution, ReLU, indexed
//! max pooling and unpooling, batch normalization, bilinear resizing,
//! channel concatenation and masked softmax cross-entropy.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod optim;
pub mod param;
pub mod tensor;

pub use error::{Result, TensorError};
pub use graph::{resize_bilinear, softmax, BnStats, Gradients, Graph, IndexMap, Var};
pub use optim::{Adam, Optimizer, Sgd};
pub use param::{msra_init, msra_std, name_seed, ParamId, ParamStore, Parameter, RunningUpdate};
pub use tensor::Tensor;
