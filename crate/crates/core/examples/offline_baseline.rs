//! Trains from dense ground truth, writes a checkpoint, reloads it, and
//! scores stride-1 predictions on held-out images against thresholding.
//!
//! cargo run --release --example offline_baseline -- [iterations]

use std::collections::BTreeMap;

use icontrain::image::ImageSet;
use icontrain::nn::{load_checkpoint, Architecture, SgdConfig};
use icontrain::segmetrics::{default_grid, gray_baseline_curve, min_vi, vi_curve};
use icontrain::trainer::{
    predict_image, synthesize_dataset, train_offline, OfflineConfig, SynthConfig, TrainerSettings,
};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let iterations: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(8);
    let data = synthesize_dataset(&SynthConfig { seed: 9, n_images: 4, size: 192, ..Default::default() })?;
    let (train, test) = data.split_at(3);

    let mut images = ImageSet::new();
    let mut truths = BTreeMap::new();
    for s in train {
        images.insert(s.id.clone(), s.image.clone());
        truths.insert(s.id.clone(), s.truth.clone());
    }
    let dir = tempfile::tempdir()?;
    let ckpt = dir.path().join("offline.ckpt");
    let config = OfflineConfig {
        settings: TrainerSettings {
            architecture: Architecture { patch_size: 31, conv1_filters: 16, conv2_filters: 16, fc_units: 64 },
            sgd: SgdConfig::default(),
            batch_size: 2048,
            delta: 0.5,
            warmup_samples: 0,
            seed: 9,
            validation_cap: 2048,
        },
        iterations,
        out: Some(ckpt.clone()),
    };
    let (_, report) = train_offline(&images, &truths, &config)?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    let model = load_checkpoint(&ckpt)?;
    let maps: Vec<_> = test.iter().map(|s| predict_image(&model, &s.image, &s.id, 1)).collect();
    let test_truths: Vec<_> = test.iter().map(|s| s.truth.clone()).collect();
    let test_images: Vec<_> = test.iter().map(|s| (s.id.clone(), s.image.clone())).collect();
    let grid = default_grid();
    let learned = min_vi(&vi_curve(&maps, &test_truths, &grid)?);
    let gray = min_vi(&gray_baseline_curve(&test_images, &test_truths, &grid)?);
    for (name, best) in [("offline model", learned), ("thresholding", gray)] {
        match best {
            Some(b) => println!("{name}: min VI {:.4} at t={:.2}", b.vi_total, b.threshold),
            None => println!("{name}: undefined at every threshold"),
        }
    }
    Ok(())
}
