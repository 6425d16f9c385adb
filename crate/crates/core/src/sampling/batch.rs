use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use super::split::is_validation;
use super::store::{ClassLabel, LabelSnapshot};
use super::SamplingError;

/// A training example: the patch around `center`, rotated by `rotation_angle`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image_id: Arc<str>,
    /// `(x, y)`
    pub center: (u32, u32),
    pub class_label: ClassLabel,
    pub seq: u64,
    /// Degrees in `[0, 360)`.
    pub rotation_angle: f64,
    /// `||one_hot(class) - prediction||_2` from the latest evaluation.
    pub last_error: Option<f32>,
}

#[derive(Clone, Debug, Default)]
pub struct DrawnBatch {
    pub samples: Vec<Sample>,
    pub warnings: Vec<String>,
    /// Samples per class that came from the new-annotation pool.
    pub new_counts: [usize; 2],
}

/// Draws `n` samples, `n / 2` per class, from the non-validation labeled pixels.
///
/// Within a class, up to half of the slots go to pixels annotated after
/// `last_draw_seq` (sampled without replacement); the remaining slots are
/// drawn uniformly with replacement from all of that class's pixels. Every
/// sample receives an independent uniform rotation angle.
pub fn draw_training_batch<R: Rng + ?Sized>(
    snapshot: &LabelSnapshot,
    n: usize,
    last_draw_seq: u64,
    rng: &mut R,
) -> Result<DrawnBatch, SamplingError> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(SamplingError::InvalidBatchSize(n));
    }
    let mut pools: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, p) in snapshot.pixels.iter().enumerate() {
        if !is_validation(&p.image_id, p.x, p.y) {
            pools[p.class_label.index()].push(i);
        }
    }
    for class in ClassLabel::ALL {
        if pools[class.index()].is_empty() {
            return Err(SamplingError::InsufficientAnnotations(class));
        }
    }

    let per_class = n / 2;
    let mut batch = DrawnBatch::default();
    for class in ClassLabel::ALL {
        let all = &pools[class.index()];
        if all.len() < per_class {
            batch.warnings.push(format!(
                "only {} {} pixels for {} slots; sampling with replacement",
                all.len(),
                class.name(),
                per_class
            ));
        }
        let fresh: Vec<usize> =
            all.iter().copied().filter(|&i| snapshot.pixels[i].seq > last_draw_seq).collect();
        let n_new = (per_class / 2).min(fresh.len());
        let mut chosen: Vec<usize> =
            sample_indices(rng, fresh.len(), n_new).into_iter().map(|k| fresh[k]).collect();
        while chosen.len() < per_class {
            chosen.push(all[rng.random_range(0..all.len())]);
        }
        batch.new_counts[class.index()] =
            chosen.iter().filter(|&&i| snapshot.pixels[i].seq > last_draw_seq).count();
        for i in chosen {
            let p = &snapshot.pixels[i];
            batch.samples.push(Sample {
                image_id: p.image_id.clone(),
                center: (p.x, p.y),
                class_label: p.class_label,
                seq: p.seq,
                rotation_angle: rng.random_range(0.0..360.0),
                last_error: None,
            });
        }
    }
    Ok(batch)
}
