//! Micro-scale CNN framework: tensors, layer primitives with exact
//! backward passes, a graph-driven model executor, procedural datasets,
//! a deterministic trainer, and checkpoints.

pub mod checkpoint;
pub mod data;
pub mod model;
pub mod ops;
pub mod tensor;
pub mod train;

pub use data::{make_dataset, Dataset, DatasetKind, NUM_CLASSES};
pub use model::{ForwardCache, Gradients, Model, NodeParams};
pub use tensor::Tensor;
pub use train::{evaluate, train, TrainConfig, TrainResult};
