//! The live training loop driven by a scripted annotator: strokes are added
//! where the published model disagrees with the truth, and every iteration
//! reports validation accuracy and publication.
//!
//! cargo run --release --example interactive_session -- [iterations]

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use icontrain::image::ImageSet;
use icontrain::nn::{Architecture, SgdConfig};
use icontrain::sampling::AnnotationStore;
use icontrain::trainer::{
    predict_image, simulate_annotator, synthesize_dataset, AnnotatorConfig, ModelSlot, Publisher, SynthConfig,
    Trainer, TrainerSettings,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let iterations: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(12);
    let data = synthesize_dataset(&SynthConfig { seed: 5, n_images: 3, size: 192, ..Default::default() })?;
    let mut images = ImageSet::new();
    let mut dims = HashMap::new();
    for s in &data {
        images.insert(s.id.clone(), s.image.clone());
        dims.insert(s.id.clone(), (s.image.width(), s.image.height()));
    }
    let store = Arc::new(AnnotationStore::in_memory(dims));
    let slot = Arc::new(ModelSlot::new());
    let settings = TrainerSettings {
        architecture: Architecture::with_patch_size(31),
        sgd: SgdConfig::default(),
        batch_size: 4096,
        delta: 0.5,
        warmup_samples: 8192,
        seed: 5,
        validation_cap: 1024,
    };
    let mut trainer = Trainer::new(settings, Arc::new(images), store.clone(), Publisher::new(None, slot.clone()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut annotated: HashMap<String, HashSet<(u32, u32)>> = HashMap::new();
    for it in 0..iterations {
        if it % 2 == 0 {
            let published = slot.latest();
            for s in &data {
                let map = published.as_ref().map(|p| predict_image(&p.model, &s.image, &s.id, 4));
                let done = annotated.entry(s.id.clone()).or_default();
                for stroke in simulate_annotator(&s.truth, map.as_ref(), 300, done, &AnnotatorConfig::default(), &mut rng) {
                    done.extend(stroke.pixels.iter().map(|p| (p[0] as u32, p[1] as u32)));
                    store.record_stroke(stroke)?;
                }
            }
        }
        let status = trainer.train_iteration()?;
        println!(
            "iteration {:2}: {} labeled, loss {:.3}, validation {:.3}, hard buffer {}, warm-up left {}, published {:?}",
            status.iteration,
            store.labeled_pixel_count(),
            status.mean_loss,
            status.validation_accuracy,
            status.hard_buffer_size,
            status.warmup_remaining,
            status.published_revision
        );
    }
    Ok(())
}
