//! Fully supervised baseline trained from dense ground truth.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::image::ImageSet;
use crate::nn::{save_checkpoint, CnnModel};
use crate::sampling::{build_validation_split, draw_training_batch, ClassLabel, LabelSnapshot, LabeledPixel};
use crate::segmetrics::LabelMap;

use super::train::{capped, sgd_pass, validation_accuracy, TrainerSettings};
use super::TrainError;

#[derive(Clone, Debug)]
pub struct OfflineConfig {
    pub settings: TrainerSettings,
    /// Number of batches of `settings.batch_size` samples.
    pub iterations: usize,
    /// Where to write the final checkpoint, if anywhere.
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OfflineReport {
    pub iterations: usize,
    pub samples_drawn: u64,
    pub labeled_pixels: usize,
    pub validation_pixels: usize,
    pub validation_accuracy: f64,
    pub final_loss: f64,
}

/// Every pixel of every truth map as a label (label 0 is membrane).
fn dense_snapshot(images: &ImageSet, truths: &BTreeMap<String, LabelMap>) -> Result<LabelSnapshot, TrainError> {
    let mut pixels = Vec::new();
    for (id, image) in images.iter() {
        let truth = truths.get(id).ok_or_else(|| TrainError::MissingLabels(id.to_string()))?;
        if (truth.width, truth.height) != (image.width(), image.height()) {
            return Err(TrainError::Config(format!("ground truth for {id:?} has a different size")));
        }
        let id: Arc<str> = Arc::from(id);
        for y in 0..truth.height {
            for x in 0..truth.width {
                let class_label =
                    if truth.get(x, y) == 0 { ClassLabel::Membrane } else { ClassLabel::NonMembrane };
                pixels.push(LabeledPixel { image_id: id.clone(), x: x as u32, y: y as u32, class_label, seq: 1 });
            }
        }
    }
    Ok(LabelSnapshot { pixels: Arc::new(pixels), max_seq: 1 })
}

/// Trains the same architecture with the same SGD settings on class-balanced
/// samples drawn from all pixels, for a fixed number of batches.
pub fn train_offline(
    images: &ImageSet,
    truths: &BTreeMap<String, LabelMap>,
    config: &OfflineConfig,
) -> Result<(CnnModel, OfflineReport), TrainError> {
    let settings = &config.settings;
    settings.sgd.validate()?;
    if images.is_empty() {
        return Err(TrainError::Config("no training images".into()));
    }
    let snapshot = dense_snapshot(images, truths)?;
    let (_, validation) = build_validation_split(&snapshot);
    let validation = capped(&validation, settings.validation_cap);

    let mut model = CnnModel::new(settings.architecture, settings.seed)?;
    let mut final_loss = f64::NAN;
    for iteration in 0..config.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(iteration as u64 + 1);
        let mut samples = draw_training_batch(&snapshot, settings.batch_size, snapshot.max_seq, &mut rng)?.samples;
        samples.shuffle(&mut rng);
        let (loss, _) = sgd_pass(&mut model, &samples, images, &settings.sgd)?;
        final_loss = loss;
        log::info!("offline iteration {} loss {loss:.4}", iteration + 1);
    }
    model.validation_accuracy = validation_accuracy(&model, &validation, images)?;
    if let Some(path) = &config.out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        save_checkpoint(&model, path)?;
    }
    let report = OfflineReport {
        iterations: config.iterations,
        samples_drawn: (config.iterations * settings.batch_size) as u64,
        labeled_pixels: snapshot.pixels.len(),
        validation_pixels: validation.len(),
        validation_accuracy: model.validation_accuracy,
        final_loss,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GrayImage;
    use crate::nn::Architecture;

    fn tiny() -> (ImageSet, BTreeMap<String, LabelMap>) {
        let mut images = ImageSet::new();
        let mut truths = BTreeMap::new();
        let n = 24;
        let pixels = (0..n * n).map(|i| if i % n == 12 { 40 } else { 200 }).collect();
        images.insert("a", GrayImage::new(n, n, pixels).unwrap());
        let labels = (0..n * n).map(|i| if i % n == 12 { 0 } else { 1 + (i % n > 12) as u32 }).collect();
        truths.insert("a".to_string(), LabelMap::new("a", n, n, labels).unwrap());
        (images, truths)
    }

    fn config(out: Option<PathBuf>) -> OfflineConfig {
        let settings = TrainerSettings {
            architecture: Architecture { patch_size: 21, conv1_filters: 4, conv2_filters: 4, fc_units: 10 },
            sgd: Default::default(),
            batch_size: 32,
            delta: 0.5,
            warmup_samples: 0,
            seed: 5,
            validation_cap: 64,
        };
        OfflineConfig { settings, iterations: 2, out }
    }

    #[test]
    fn same_seed_gives_identical_checkpoint_bytes() {
        let (images, truths) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        train_offline(&images, &truths, &config(Some(a.clone()))).unwrap();
        let (_, report) = train_offline(&images, &truths, &config(Some(b.clone()))).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        assert_eq!(report.samples_drawn, 64);
        assert_eq!(report.labeled_pixels, 24 * 24);
    }

    #[test]
    fn missing_labels_fail() {
        let (images, _) = tiny();
        let err = train_offline(&images, &BTreeMap::new(), &config(None)).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
