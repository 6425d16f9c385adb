//! Training loop, model publication, prediction serving and experiment
//! harnesses.

mod annotator;
mod config;
mod experiment;
mod offline;
mod predict;
mod publish;
mod service;
mod synth;
mod train;

pub use annotator::{simulate_annotator, AnnotatorConfig};
pub use config::ProjectConfig;
pub use experiment::{run_comparison, ComparisonConfig, ComparisonReport};
pub use offline::{train_offline, OfflineConfig, OfflineReport};
pub use predict::{grid_positions, predict_image};
pub use publish::{checkpoint_file, ModelSlot, PublishedCheckpoint, PublishedModel, Publisher, BEST_CHECKPOINT};
pub use service::{serve, ServiceHandle};
pub use synth::{synthesize_dataset, SynthConfig, SynthImage};
pub use train::{Trainer, TrainerSettings, TrainingStatus};

use crate::image::ImageError;
use crate::nn::NnError;
use crate::sampling::{ClassLabel, SamplingError};
use crate::segmetrics::MetricsError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("no ground truth for image {0:?}")]
    MissingLabels(String),
    #[error("unknown image {0:?}")]
    UnknownImage(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("server: {0}")]
    Server(String),
}

impl TrainError {
    /// Process exit code for the command-line tool: 2 for configuration
    /// problems, 3 when there is not enough labelled data, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            TrainError::Config(_) | TrainError::Nn(NnError::InvalidArchitecture(_) | NnError::InvalidConfig(_)) => 2,
            TrainError::Sampling(SamplingError::InsufficientAnnotations(_)) | TrainError::MissingLabels(_) => 3,
            _ => 1,
        }
    }

    pub fn insufficient_class(&self) -> Option<ClassLabel> {
        match self {
            TrainError::Sampling(SamplingError::InsufficientAnnotations(c)) => Some(*c),
            _ => None,
        }
    }
}
