//! Segmentation evaluation: threshold probability maps, label connected
//! regions, and score them against ground truth with variation of information.

mod components;
mod curve;
pub mod io;
mod maps;
mod vi;

use thiserror::Error;

pub use components::{connected_components, BinaryMask};
pub use curve::{
    default_grid, gray_baseline_curve, min_vi, parse_grid, segment_vi, threshold_gray, threshold_grid,
    threshold_map, vi_curve, ViResult, GRAY_POLARITY,
};
pub use maps::{LabelMap, MapMetadata, ProbabilityMap};
pub use vi::{variation_of_information, ViScore, LOG_BASE};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("invalid threshold grid {0}")]
    InvalidGrid(String),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f32),
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("no pixels left to compare")]
    NoCountedPixels,
    #[error("no images to evaluate")]
    NoImages,
    #[error("image {0} has no counterpart")]
    Unpaired(String),
    #[error("label {0} does not fit in 16 bits")]
    LabelOverflow(u32),
    #[error("image: {0}")]
    Image(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
