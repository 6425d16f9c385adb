//! Class-balanced batches with priority for new strokes, the hashed
//! validation split, and hard-example retention.
//!
//! cargo run --release --example sampling_batches

use std::collections::HashMap;

use icontrain::sampling::{
    build_validation_split, draw_training_batch, retain_for_next_iteration, select_hard_examples, AnnotationStore,
    ClassLabel, NewStroke,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let dims: HashMap<String, (usize, usize)> = [("cells".to_string(), (128, 128))].into_iter().collect();
    let store = AnnotationStore::in_memory(dims);
    let line = |y: i64, class| NewStroke {
        image_id: "cells".into(),
        class_label: class,
        pixels: (0..128).map(|x| [x, y]).collect(),
        author: "demo".into(),
    };
    store.record_stroke(line(10, ClassLabel::Membrane))?;
    store.record_stroke(line(20, ClassLabel::NonMembrane))?;
    store.record_stroke(line(30, ClassLabel::NonMembrane))?;
    let first_draw = store.latest_seq();
    store.record_stroke(line(40, ClassLabel::Membrane))?;

    let snapshot = store.snapshot();
    let (train, validation) = build_validation_split(&snapshot);
    println!("{} labeled pixels: {} train, {} validation", snapshot.pixels.len(), train.len(), validation.len());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = draw_training_batch(&snapshot, 64, first_draw, &mut rng)?;
    let membrane = batch.samples.iter().filter(|s| s.class_label == ClassLabel::Membrane).count();
    println!(
        "batch of {}: {membrane} membrane, {} non-membrane; new-stroke samples per class {:?}",
        batch.samples.len(),
        batch.samples.len() - membrane,
        batch.new_counts
    );

    // pretend the network produced these predictions
    let mut evaluated: Vec<_> = batch
        .samples
        .into_iter()
        .map(|s| {
            let p1: f32 = rng.random_range(0.0..1.0);
            (s, [1.0 - p1, p1])
        })
        .collect();
    let hard = select_hard_examples(&mut evaluated, 0.5);
    let buffer = retain_for_next_iteration(hard);
    println!("{} hard examples, {} carried into the next iteration", buffer.source_size, buffer.len());
    Ok(())
}
