//! Softmax tabular policy, MLP value function and first-order optimizers.

mod optim;
mod policy;
mod value;

pub use optim::{Direction, Optimizer, OptimizerConfig, OptimizerKind};
pub use policy::{entropy, mean_table_entropy, softmax, SoftmaxTabularPolicy};
pub use value::{gelu, gelu_derivative, MlpValueFunction};
