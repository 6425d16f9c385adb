#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use icontrain::image::ImageSet;
use icontrain::nn::{Architecture, SgdConfig};
use icontrain::sampling::AnnotationStore;
use icontrain::trainer::{
    predict_image, simulate_annotator, AnnotatorConfig, ModelSlot, ProjectConfig, Publisher, SynthConfig,
    SynthImage, Trainer, TrainerSettings, TrainingStatus,
};

pub fn reduced_arch() -> Architecture {
    Architecture { patch_size: 21, conv1_filters: 4, conv2_filters: 4, fc_units: 10 }
}

pub fn small_settings(batch_size: usize, seed: u64) -> TrainerSettings {
    TrainerSettings {
        architecture: Architecture { patch_size: 21, conv1_filters: 8, conv2_filters: 8, fc_units: 32 },
        sgd: SgdConfig::default(),
        batch_size,
        delta: 0.5,
        warmup_samples: 0,
        seed,
        validation_cap: 512,
    }
}

pub fn synth(n: usize, size: usize, seed: u64) -> Vec<SynthImage> {
    icontrain::trainer::synthesize_dataset(&SynthConfig { seed, n_images: n, size, ..Default::default() }).unwrap()
}

pub fn image_set(data: &[SynthImage]) -> (Arc<ImageSet>, HashMap<String, (usize, usize)>) {
    let mut images = ImageSet::new();
    let mut dims = HashMap::new();
    for s in data {
        images.insert(s.id.clone(), s.image.clone());
        dims.insert(s.id.clone(), (s.image.width(), s.image.height()));
    }
    (Arc::new(images), dims)
}

/// Writes images into `dir/images` and returns a service config rooted at `dir`.
pub fn service_config(dir: &Path, data: &[SynthImage]) -> ProjectConfig {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();
    for s in data {
        s.image.save_png(&images.join(format!("{}.png", s.id))).unwrap();
    }
    ProjectConfig {
        image_dir: images,
        work_dir: dir.join("work"),
        listen: "127.0.0.1:0".into(),
        warmup_samples: 0,
        batch_size: 256,
        validation_cap: 256,
        ..Default::default()
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

pub fn poll_until<T>(timeout: Duration, mut f: impl FnMut() -> Option<T>) -> Option<T> {
    let start = Instant::now();
    while start.elapsed() < timeout {
        if let Some(v) = f() {
            return Some(v);
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    None
}

/// One scripted interactive session: before every `annotate_every`-th
/// iteration the simulated annotator labels each image using the latest
/// published model; records the annotation seq each iteration trained on.
pub struct Session {
    pub trainer: Trainer,
    pub store: Arc<AnnotationStore>,
    pub statuses: Vec<TrainingStatus>,
    pub seen: Vec<u64>,
}

pub fn run_session(
    data: &[SynthImage],
    settings: TrainerSettings,
    checkpoint_dir: Option<PathBuf>,
    log: Option<&Path>,
    iterations: usize,
    per_image: usize,
) -> Session {
    let (images, dims) = image_set(data);
    let store = Arc::new(match log {
        Some(path) => AnnotationStore::open(path, dims).unwrap(),
        None => AnnotationStore::in_memory(dims),
    });
    let slot = Arc::new(ModelSlot::new());
    let mut trainer =
        Trainer::new(settings.clone(), images, store.clone(), Publisher::new(checkpoint_dir, slot.clone())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed + 1000);
    let mut annotated: HashMap<String, HashSet<(u32, u32)>> = HashMap::new();
    let mut statuses = Vec::new();
    let mut seen = Vec::new();
    for it in 0..iterations {
        if it % 2 == 0 {
            let published = slot.latest();
            for s in data {
                let map = published.as_ref().map(|p| predict_image(&p.model, &s.image, &s.id, 4));
                let done = annotated.entry(s.id.clone()).or_default();
                for stroke in simulate_annotator(&s.truth, map.as_ref(), per_image, done, &AnnotatorConfig::default(), &mut rng) {
                    done.extend(stroke.pixels.iter().map(|p| (p[0] as u32, p[1] as u32)));
                    store.record_stroke(stroke).unwrap();
                }
            }
        }
        statuses.push(trainer.train_iteration().unwrap());
        seen.push(store.latest_seq());
    }
    Session { trainer, store, statuses, seen }
}
