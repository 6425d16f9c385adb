//! Interactive training against a scripted annotator, compared with an
//! offline model and intensity thresholding on held-out images.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::image::{GrayImage, ImageSet};
use crate::nn::CnnModel;
use crate::sampling::AnnotationStore;
use crate::segmetrics::{gray_baseline_curve, min_vi, vi_curve, LabelMap, ViResult};

use super::annotator::{simulate_annotator, AnnotatorConfig};
use super::offline::{train_offline, OfflineConfig, OfflineReport};
use super::predict::predict_image;
use super::publish::{ModelSlot, PublishedCheckpoint, Publisher};
use super::synth::{synthesize_dataset, SynthConfig};
use super::train::{Trainer, TrainerSettings, TrainingStatus};
use super::TrainError;

#[derive(Clone, Debug)]
pub struct ComparisonConfig {
    /// `n_images` is ignored; `n_train + n_test` images are generated.
    pub synth: SynthConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub settings: TrainerSettings,
    pub iterations: usize,
    /// Upper bound on annotated pixels as a fraction of all training pixels.
    pub budget_fraction: f64,
    /// The annotator revisits every training image once per this many iterations.
    pub annotate_every: usize,
    pub preview_stride: usize,
    pub eval_stride: usize,
    pub thresholds: Vec<f64>,
    pub run_offline: bool,
    pub annotator: AnnotatorConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub interactive: Vec<ViResult>,
    pub gray: Vec<ViResult>,
    pub offline: Option<Vec<ViResult>>,
    pub interactive_min: ViResult,
    pub gray_min: ViResult,
    pub offline_min: Option<ViResult>,
    pub annotation_budget: usize,
    pub annotated_pixels: usize,
    pub training_pixels: usize,
    pub statuses: Vec<TrainingStatus>,
    pub published: Vec<PublishedCheckpoint>,
    pub offline_report: Option<OfflineReport>,
}

impl ComparisonReport {
    pub fn annotated_fraction(&self) -> f64 {
        self.annotated_pixels as f64 / self.training_pixels as f64
    }
}

fn evaluate(
    model: &CnnModel,
    test: &[(String, GrayImage)],
    truths: &[LabelMap],
    stride: usize,
    thresholds: &[f64],
) -> Result<Vec<ViResult>, TrainError> {
    let maps: Vec<_> = test.iter().map(|(id, img)| predict_image(model, img, id, stride)).collect();
    Ok(vi_curve(&maps, truths, thresholds)?)
}

pub fn run_comparison(config: &ComparisonConfig) -> Result<ComparisonReport, TrainError> {
    if config.annotate_every == 0 || config.n_train == 0 || config.n_test == 0 {
        return Err(TrainError::Config("comparison needs training and test images and annotate_every > 0".into()));
    }
    let data = synthesize_dataset(&SynthConfig { n_images: config.n_train + config.n_test, ..config.synth.clone() })?;
    let (train, test) = data.split_at(config.n_train);

    let mut images = ImageSet::new();
    let mut dims = HashMap::new();
    for s in train {
        images.insert(s.id.clone(), s.image.clone());
        dims.insert(s.id.clone(), (s.image.width(), s.image.height()));
    }
    let images = Arc::new(images);
    let training_pixels = images.total_pixels();
    let store = Arc::new(AnnotationStore::in_memory(dims));
    let slot = Arc::new(ModelSlot::new());
    let mut trainer =
        Trainer::new(config.settings.clone(), images.clone(), store.clone(), Publisher::new(None, slot.clone()))?;

    let rounds = config.iterations.div_ceil(config.annotate_every).max(1);
    let budget = (config.budget_fraction * training_pixels as f64).floor() as usize;
    let per_image = budget / (rounds * config.n_train);
    let mut annotated: HashMap<String, HashSet<(u32, u32)>> = HashMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.settings.seed ^ 0xa11_0a7e);
    let mut statuses = Vec::new();

    for iteration in 0..config.iterations {
        if iteration % config.annotate_every == 0 {
            let published = slot.latest();
            for s in train {
                let map = published.as_ref().map(|p| predict_image(&p.model, &s.image, &s.id, config.preview_stride));
                let done = annotated.entry(s.id.clone()).or_default();
                for stroke in simulate_annotator(&s.truth, map.as_ref(), per_image, done, &config.annotator, &mut rng) {
                    done.extend(stroke.pixels.iter().map(|p| (p[0] as u32, p[1] as u32)));
                    store.record_stroke(stroke)?;
                }
            }
        }
        let status = trainer.train_iteration()?;
        log::info!(
            "iteration {} loss {:.4} validation {:.4} published {:?}",
            status.iteration,
            status.mean_loss,
            status.validation_accuracy,
            status.published_revision
        );
        statuses.push(status);
    }

    let test_images: Vec<(String, GrayImage)> = test.iter().map(|s| (s.id.clone(), s.image.clone())).collect();
    let test_truths: Vec<LabelMap> = test.iter().map(|s| s.truth.clone()).collect();
    let best = slot.latest();
    let model = best.as_ref().map(|p| &p.model).unwrap_or(trainer.model());
    let interactive = evaluate(model, &test_images, &test_truths, config.eval_stride, &config.thresholds)?;
    let gray = gray_baseline_curve(&test_images, &test_truths, &config.thresholds)?;

    let (offline, offline_report) = if config.run_offline {
        let truths: BTreeMap<String, LabelMap> = train.iter().map(|s| (s.id.clone(), s.truth.clone())).collect();
        let offline_config = OfflineConfig { settings: config.settings.clone(), iterations: config.iterations, out: None };
        let (model, report) = train_offline(&images, &truths, &offline_config)?;
        (Some(evaluate(&model, &test_images, &test_truths, config.eval_stride, &config.thresholds)?), Some(report))
    } else {
        (None, None)
    };

    let no_points = || TrainError::Config("empty threshold grid".into());
    Ok(ComparisonReport {
        interactive_min: min_vi(&interactive).ok_or_else(no_points)?,
        gray_min: min_vi(&gray).ok_or_else(no_points)?,
        offline_min: offline.as_deref().and_then(min_vi),
        interactive,
        gray,
        offline,
        annotation_budget: budget,
        annotated_pixels: store.labeled_pixel_count(),
        training_pixels,
        statuses,
        published: trainer.publisher().history().to_vec(),
        offline_report,
    })
}
