use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::{Architecture, SgdConfig};
use crate::segmetrics::parse_grid;

/// Service and training settings, read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    /// Directory of 8-bit grayscale PNGs; the file stem is the image id.
    pub image_dir: PathBuf,
    /// Holds `annotations.jsonl` and `checkpoints/`.
    pub work_dir: PathBuf,
    pub listen: String,
    pub patch_size: usize,
    pub conv_filters: usize,
    pub fc_units: usize,
    pub sgd: SgdConfig,
    /// Samples drawn per training iteration, before adding retained hard examples.
    pub batch_size: usize,
    pub delta: f32,
    /// Drawn samples required before the first model is published.
    pub warmup_samples: u64,
    /// `start:stop:step`
    pub threshold_grid: String,
    pub preview_stride: usize,
    pub seed: u64,
    /// Upper bound on validation pixels scored per iteration.
    pub validation_cap: usize,
    /// Iterations of `batch_size` samples used by offline training.
    pub offline_iterations: usize,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            image_dir: PathBuf::from("images"),
            work_dir: PathBuf::from("work"),
            listen: "127.0.0.1:8080".into(),
            patch_size: 47,
            conv_filters: 48,
            fc_units: 200,
            sgd: SgdConfig::default(),
            batch_size: 4096,
            delta: 0.5,
            warmup_samples: 100_000,
            threshold_grid: "0.05:0.95:0.05".into(),
            preview_stride: 4,
            seed: 0,
            validation_cap: 4096,
            offline_iterations: 50,
        }
    }
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ProjectConfig = serde_json::from_str(&text)
            .map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            patch_size: self.patch_size,
            conv1_filters: self.conv_filters,
            conv2_filters: self.conv_filters,
            fc_units: self.fc_units,
        }
    }

    pub fn thresholds(&self) -> Result<Vec<f64>, TrainError> {
        parse_grid(&self.threshold_grid).map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        self.architecture().validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.sgd.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return bad(format!("batch_size must be even and >= 2, got {}", self.batch_size));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be non-negative, got {}", self.delta));
        }
        if self.preview_stride == 0 {
            return bad("preview_stride must be >= 1".into());
        }
        if self.validation_cap == 0 {
            return bad("validation_cap must be >= 1".into());
        }
        self.thresholds()?;
        Ok(())
    }

    pub fn annotation_log(&self) -> PathBuf {
        self.work_dir.join("annotations.jsonl")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.work_dir.join("checkpoints")
    }
}
