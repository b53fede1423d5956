//! Differentiable function approximators: a reverse-mode tape over dense
//! tensors, MLPs, squashed Gaussian policies, Adam, and tensor archives.

pub mod gaussian;
pub mod graph;
pub mod mlp;
pub mod optim;
pub mod serialize;

pub use gaussian::{sample_action, GaussianHead, GaussianPolicy, GraphSample};
pub use graph::{Gradients, Graph, Tensor, Var};
pub use mlp::{Activation, MlpParams, MlpVars, Parameters};
pub use optim::{optimizer_step, OptState};
pub use serialize::TensorArchive;
