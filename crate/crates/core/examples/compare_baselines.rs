//! Interactive training with a simulated annotator versus an offline model
//! and plain intensity thresholding, scored by VI on held-out images.
//!
//! cargo run --release --example compare_baselines -- [iterations] [batch_size] [no-offline]

use icontrain::nn::{Architecture, SgdConfig};
use icontrain::segmetrics::default_grid;
use icontrain::trainer::{run_comparison, AnnotatorConfig, ComparisonConfig, SynthConfig, TrainerSettings};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map(|a| a.parse()).transpose()?.unwrap_or(20);
    let batch_size = args.next().map(|a| a.parse()).transpose()?.unwrap_or(4096);
    let run_offline = args.next().is_none_or(|a| a != "no-offline");

    let config = ComparisonConfig {
        synth: SynthConfig { seed: 7, size: 256, ..Default::default() },
        n_train: 10,
        n_test: 5,
        settings: TrainerSettings {
            architecture: Architecture::with_patch_size(31),
            sgd: SgdConfig::default(),
            batch_size,
            delta: 0.5,
            warmup_samples: 0,
            seed: 7,
            validation_cap: 2048,
        },
        iterations,
        budget_fraction: 0.02,
        annotate_every: 2,
        preview_stride: 4,
        eval_stride: 1,
        thresholds: default_grid(),
        run_offline,
        annotator: AnnotatorConfig::default(),
    };
    let report = run_comparison(&config)?;

    println!("threshold  interactive  offline  gray");
    for (i, g) in report.interactive.iter().zip(&report.gray) {
        let offline = report
            .offline
            .as_ref()
            .and_then(|c| c.iter().find(|o| o.threshold == i.threshold))
            .map_or(f64::NAN, |o| o.vi_total);
        println!("{:9.2}  {:11.4}  {:7.4}  {:.4}", i.threshold, i.vi_total, offline, g.vi_total);
    }
    println!(
        "min VI: interactive {:.4} @ {:.2}, gray {:.4} @ {:.2}",
        report.interactive_min.vi_total,
        report.interactive_min.threshold,
        report.gray_min.vi_total,
        report.gray_min.threshold
    );
    if let Some(o) = report.offline_min {
        println!("min VI: offline {:.4} @ {:.2}", o.vi_total, o.threshold);
    }
    println!(
        "annotated {} of {} training pixels ({:.2}%), budget {}",
        report.annotated_pixels,
        report.training_pixels,
        100.0 * report.annotated_fraction(),
        report.annotation_budget
    );
    Ok(())
}
