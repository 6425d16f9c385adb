//! Variation of information between segmentations, and the VI curve of
//! intensity thresholding on a synthetic image.
//!
//! cargo run --release --example vi_evaluation

use icontrain::segmetrics::{default_grid, gray_baseline_curve, min_vi, variation_of_information, LabelMap};
use icontrain::trainer::{synthesize_dataset, SynthConfig};

fn main() -> anyhow::Result<()> {
    let truth = LabelMap::new("toy", 4, 2, vec![1, 1, 2, 2, 1, 1, 2, 2])?;
    let merged = LabelMap::new("toy", 4, 2, vec![1; 8])?;
    let split = LabelMap::new("toy", 4, 2, vec![1, 3, 2, 2, 1, 3, 2, 2])?;
    for (name, seg) in [("identical", &truth), ("merged", &merged), ("split", &split)] {
        let vi = variation_of_information(seg, &truth, true)?;
        println!("{name:>9}: VI {:.3} bits (split {:.3}, merge {:.3})", vi.total, vi.split, vi.merge);
    }

    let data = synthesize_dataset(&SynthConfig { seed: 2, n_images: 2, size: 256, ..Default::default() })?;
    let images: Vec<_> = data.iter().map(|s| (s.id.clone(), s.image.clone())).collect();
    let truths: Vec<_> = data.iter().map(|s| s.truth.clone()).collect();
    let curve = gray_baseline_curve(&images, &truths, &default_grid())?;
    for point in &curve {
        println!("t={:.2} VI {:.4}", point.threshold, point.vi_total);
    }
    if let Some(best) = min_vi(&curve) {
        println!("best threshold {:.2}: VI {:.4}", best.threshold, best.vi_total);
    }
    Ok(())
}
