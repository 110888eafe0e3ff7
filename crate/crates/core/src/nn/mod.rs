//! Dense feed-forward entailment classifiers trained by backpropagation.

mod format;
mod model;
mod optim;
mod train;

use thiserror::Error;

pub use format::{from_bytes, load_model, save_model, to_bytes, NnwtError};
pub use model::{
    argmax, Activation, Gradients, Layer, LayerSpec, MlpModel, Mode, Preset, DEFAULT_ACTIVITY_REG,
    LOG_CLAMP, NUM_CLASSES,
};
pub use optim::{Adam, Optimizer, OptimizerRegistry, Sgd};
pub use train::{accuracy, fit, fit_with, Dataset, LossHistory, TrainConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("input dimension {found} does not match model input {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch has {rows} rows but {labels} labels")]
    BatchMismatch { rows: usize, labels: usize },
    #[error("class label {0} out of range")]
    BadLabel(usize),
    #[error("model has no layers")]
    NoLayers,
    #[error("layer {index}: {reason}")]
    InvalidLayer { index: usize, reason: String },
    #[error("unknown optimizer {0:?}")]
    UnknownOptimizer(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}
