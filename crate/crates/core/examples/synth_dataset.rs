//! Writes synthetic membrane images and their ground-truth cell labels.
//!
//! cargo run --release --example synth_dataset -- <out_dir>

use icontrain::segmetrics::io::save_label_map;
use icontrain::trainer::{synthesize_dataset, SynthConfig};

fn main() -> anyhow::Result<()> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth".into()));
    let data = synthesize_dataset(&SynthConfig { seed: 0, n_images: 4, size: 256, ..Default::default() })?;
    std::fs::create_dir_all(&out)?;
    for s in &data {
        s.image.save_png(&out.join(format!("{}.png", s.id)))?;
        save_label_map(&s.truth, &out.join(format!("{}_truth.png", s.id)))?;
        let membrane = s.boundary.iter().filter(|&&b| b).count();
        println!(
            "{}: {} cells, {:.1}% membrane",
            s.id,
            s.regions.iter().max().map_or(0, |m| m + 1),
            100.0 * membrane as f64 / s.boundary.len() as f64
        );
    }
    println!("wrote {} images to {}", data.len(), out.display());
    Ok(())
}
