//! The iterative training loop.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::ImageSet;
use crate::nn::{Architecture, CnnModel, NnError, Patch, SgdConfig};
use crate::sampling::{
    build_validation_split, draw_training_batch, extract_patch, retain_for_next_iteration,
    select_hard_examples, AnnotationStore, ClassLabel, HardExampleBuffer, LabeledPixel, Sample,
};

use super::config::ProjectConfig;
use super::publish::{Publisher, PublishedModel};
use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerSettings {
    pub architecture: Architecture,
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub delta: f32,
    pub warmup_samples: u64,
    pub seed: u64,
    pub validation_cap: usize,
}

impl From<&ProjectConfig> for TrainerSettings {
    fn from(c: &ProjectConfig) -> Self {
        TrainerSettings {
            architecture: c.architecture(),
            sgd: c.sgd,
            batch_size: c.batch_size,
            delta: c.delta,
            warmup_samples: c.warmup_samples,
            seed: c.seed,
            validation_cap: c.validation_cap,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingStatus {
    pub iteration: u64,
    pub samples_drawn_total: u64,
    /// Poorly performing samples found in the last evaluation.
    pub hard_set_size: usize,
    pub hard_buffer_size: usize,
    pub validation_accuracy: f64,
    pub validation_pixels: usize,
    pub best_validation_accuracy: f64,
    pub model_revision: u64,
    pub published_revision: Option<u64>,
    pub warmup_remaining: u64,
    /// Newest annotation sequence number seen by the last iteration.
    pub annotations_seen: u64,
    pub mean_loss: f64,
    pub rejected_updates: u64,
    pub last_error: Option<String>,
}

/// Patch for a sample, rotated by its angle.
pub(crate) fn sample_patch(images: &ImageSet, sample: &Sample, patch_size: usize) -> Result<Patch, TrainError> {
    let image = images
        .get(&sample.image_id)
        .ok_or_else(|| TrainError::UnknownImage(sample.image_id.to_string()))?;
    let (x, y) = sample.center;
    Ok(extract_patch(image, (x as i64, y as i64), patch_size, sample.rotation_angle)?)
}

/// One pass of minibatch SGD over `samples` in order. Returns the mean loss
/// and the number of minibatches whose update was rejected.
pub(crate) fn sgd_pass(
    model: &mut CnnModel,
    samples: &[Sample],
    images: &ImageSet,
    sgd: &SgdConfig,
) -> Result<(f64, u64), TrainError> {
    let ps = model.patch_size();
    let mut loss_sum = 0.0;
    let mut rejected = 0;
    for chunk in samples.chunks(sgd.minibatch_size) {
        let batch: Vec<(Patch, [f32; 2])> = chunk
            .par_iter()
            .map(|s| Ok((sample_patch(images, s, ps)?, s.class_label.one_hot())))
            .collect::<Result<_, TrainError>>()?;
        let (grads, loss) = model.batch_gradient(&batch)?;
        match model.sgd_momentum_step(&grads, sgd) {
            Ok(()) => loss_sum += loss as f64 * chunk.len() as f64,
            Err(NnError::NonFinite(name)) => {
                log::warn!("rejected update with non-finite gradient in {name}");
                rejected += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((loss_sum / samples.len().max(1) as f64, rejected))
}

/// Class probabilities for every sample at its stored rotation.
pub(crate) fn evaluate_samples(model: &CnnModel, samples: &[Sample], images: &ImageSet) -> Result<Vec<[f32; 2]>, TrainError> {
    let ps = model.patch_size();
    samples
        .par_iter()
        .map(|s| Ok(model.forward(&sample_patch(images, s, ps)?)?))
        .collect()
}

/// Evenly spaced subset of at most `cap` elements.
pub(crate) fn capped<T: Clone>(items: &[T], cap: usize) -> Vec<T> {
    if items.len() <= cap {
        return items.to_vec();
    }
    (0..cap).map(|i| items[i * items.len() / cap].clone()).collect()
}

/// Fraction of pixels whose argmax prediction on the unrotated patch matches the label.
pub(crate) fn validation_accuracy(model: &CnnModel, pixels: &[LabeledPixel], images: &ImageSet) -> Result<f64, TrainError> {
    if pixels.is_empty() {
        return Ok(0.0);
    }
    let samples: Vec<Sample> = pixels
        .iter()
        .map(|p| Sample {
            image_id: p.image_id.clone(),
            center: (p.x, p.y),
            class_label: p.class_label,
            seq: p.seq,
            rotation_angle: 0.0,
            last_error: None,
        })
        .collect();
    let preds = evaluate_samples(model, &samples, images)?;
    let correct = samples
        .iter()
        .zip(&preds)
        .filter(|(s, p)| {
            let predicted = if p[1] > p[0] { ClassLabel::Membrane } else { ClassLabel::NonMembrane };
            predicted == s.class_label
        })
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Owns the model being trained; single writer.
pub struct Trainer {
    settings: TrainerSettings,
    images: Arc<ImageSet>,
    store: Arc<AnnotationStore>,
    model: CnnModel,
    buffer: HardExampleBuffer,
    last_draw_seq: u64,
    publisher: Publisher,
    status: TrainingStatus,
}

impl Trainer {
    pub fn new(
        settings: TrainerSettings,
        images: Arc<ImageSet>,
        store: Arc<AnnotationStore>,
        publisher: Publisher,
    ) -> Result<Self, TrainError> {
        settings.sgd.validate()?;
        let model = CnnModel::new(settings.architecture, settings.seed)?;
        let status = TrainingStatus { warmup_remaining: settings.warmup_samples, ..Default::default() };
        Ok(Trainer {
            settings,
            images,
            store,
            model,
            buffer: HardExampleBuffer::default(),
            last_draw_seq: 0,
            publisher,
            status,
        })
    }

    /// Continue training from a previously published model.
    pub fn resume_from(&mut self, model: CnnModel) -> Result<(), TrainError> {
        if model.architecture() != &self.settings.architecture {
            return Err(TrainError::Config("checkpoint architecture differs from configuration".into()));
        }
        self.status.model_revision = model.revision;
        self.status.best_validation_accuracy = model.validation_accuracy;
        self.status.published_revision = Some(model.revision);
        self.publisher.resume(Arc::new(PublishedModel { model: model.clone(), trained_through_seq: 0 }));
        self.model = model;
        Ok(())
    }

    pub fn status(&self) -> &TrainingStatus {
        &self.status
    }

    pub fn model(&self) -> &CnnModel {
        &self.model
    }

    pub fn hard_buffer(&self) -> &HardExampleBuffer {
        &self.buffer
    }

    pub fn publisher(&self) -> &Publisher {
        &self.publisher
    }

    pub fn settings(&self) -> &TrainerSettings {
        &self.settings
    }

    /// Draw a class-balanced batch, add last iteration's retained hard
    /// examples, shuffle, run minibatch SGD, re-evaluate every sample to
    /// refresh the hard-example buffer, score the validation pixels, and
    /// publish if validation accuracy improved.
    pub fn train_iteration(&mut self) -> Result<TrainingStatus, TrainError> {
        match self.iterate() {
            Ok(()) => {
                self.status.last_error = None;
                Ok(self.status.clone())
            }
            Err(e) => {
                self.status.last_error = Some(e.to_string());
                Err(e)
            }
        }
    }

    fn iterate(&mut self) -> Result<(), TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.settings.seed);
        rng.set_stream(self.status.iteration + 1);

        let snapshot = self.store.snapshot();
        let drawn = draw_training_batch(&snapshot, self.settings.batch_size, self.last_draw_seq, &mut rng)?;
        for w in &drawn.warnings {
            log::warn!("{w}");
        }

        let mut samples: Vec<Sample> = self.buffer.entries.clone();
        samples.extend(drawn.samples);
        samples.shuffle(&mut rng);

        let mut model = self.model.clone();
        let (mean_loss, rejected) = sgd_pass(&mut model, &samples, &self.images, &self.settings.sgd)?;

        let predictions = evaluate_samples(&model, &samples, &self.images)?;
        let mut evaluated: Vec<(Sample, [f32; 2])> = samples.into_iter().zip(predictions).collect();
        let hard = select_hard_examples(&mut evaluated, self.settings.delta);
        let hard_set_size = hard.len();
        let buffer = retain_for_next_iteration(hard);

        let (_, validation) = build_validation_split(&snapshot);
        let validation = capped(&validation, self.settings.validation_cap);
        model.validation_accuracy = validation_accuracy(&model, &validation, &self.images)?;

        // commit
        self.model = model;
        self.buffer = buffer;
        self.last_draw_seq = snapshot.max_seq;
        let st = &mut self.status;
        st.iteration += 1;
        st.samples_drawn_total += self.settings.batch_size as u64;
        st.hard_set_size = hard_set_size;
        st.hard_buffer_size = self.buffer.len();
        st.validation_accuracy = self.model.validation_accuracy;
        st.validation_pixels = validation.len();
        st.model_revision = self.model.revision;
        st.warmup_remaining = self.settings.warmup_samples.saturating_sub(st.samples_drawn_total);
        st.annotations_seen = snapshot.max_seq;
        st.mean_loss = mean_loss;
        st.rejected_updates += rejected;

        if st.warmup_remaining == 0 && !validation.is_empty() {
            if let Some(rev) = self.publisher.checkpoint_if_improved(&self.model, snapshot.max_seq)? {
                self.status.published_revision = Some(rev);
            }
        }
        self.status.best_validation_accuracy = self.publisher.best().unwrap_or(0.0);
        Ok(())
    }
}
