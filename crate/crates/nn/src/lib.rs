//! Reverse-mode autodiff with convolution, deconvolution, fully-connected
//! and LSTM layers, an RMSProp optimizer over a versioned parameter store,
//! and a checksummed checkpoint format.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::NnError;
pub use graph::{Graph, NodeId};
pub use layers::{Conv2d, Deconv2d, Linear, Lstm, LstmNodes, LstmState};
pub use optim::{optimize_step, ModelParams, OptimConfig, OptimizerKind, UpdateStats};
pub use params::{Gradients, ParamId, ParamSet};
pub use tensor::{Scalar, Tensor};
