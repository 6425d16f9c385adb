//! Annotation storage and training-batch assembly: class-balanced draws that
//! favour fresh annotations, rotated patches, and the hard-example buffer.

mod batch;
mod hard;
mod patch;
mod split;
mod store;

use thiserror::Error;

pub use batch::{draw_training_batch, DrawnBatch, Sample};
pub use hard::{
    prediction_error, retain_for_next_iteration, select_hard_examples, HardExampleBuffer, DEFAULT_DELTA,
    RETENTION_CAP,
};
pub use patch::extract_patch;
pub use split::{build_validation_split, is_validation};
pub use store::{AnnotationStore, AnnotationStroke, ClassLabel, LabelSnapshot, LabeledPixel, NewStroke};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("pixels outside image {image_id}: {pixels:?}")]
    OutOfBounds { image_id: String, pixels: Vec<[i64; 2]> },
    #[error("unknown image {0}")]
    UnknownImage(String),
    #[error("stroke has no pixels")]
    EmptyStroke,
    #[error("patch center ({x}, {y}) is outside the image")]
    CenterOutOfBounds { x: i64, y: i64 },
    #[error("insufficient annotations: no {} pixels available for training", .0.name())]
    InsufficientAnnotations(ClassLabel),
    #[error("batch size must be even and at least 2, got {0}")]
    InvalidBatchSize(usize),
    #[error("annotation log line {line}: {source}")]
    Log { line: usize, source: serde_json::Error },
    #[error("corrupt annotation log: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
