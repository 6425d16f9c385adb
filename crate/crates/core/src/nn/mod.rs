//! Small convolutional pixel classifier: forward and backward passes, SGD
//! with momentum, binary checkpoints and whole-image inference.

pub mod checkpoint;
pub mod dense;
pub mod layers;
mod network;
mod scalar;
mod sgd;
mod tensor;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use network::{Architecture, CnnModel, Network, Params, Patch, CLASSES, KERNEL, PARAM_NAMES};
pub use scalar::{gemm, MatRef, Scalar};
pub use sgd::SgdConfig;
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    Shape { what: &'static str, expected: Vec<usize>, got: Vec<usize> },
    #[error("gradient arrays do not match the model")]
    GradientShape,
    #[error("target must be one-hot")]
    InvalidTarget,
    #[error("invalid patch: {0}")]
    InvalidPatch(String),
    #[error("non-finite gradient in {0}")]
    NonFinite(&'static str),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid SGD configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint field {field}: {reason}")]
    Format { field: String, reason: String },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
