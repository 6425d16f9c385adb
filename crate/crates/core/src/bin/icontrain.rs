use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use icontrain::image::{png_files, GrayImage, ImageSet};
use icontrain::nn::load_checkpoint;
use icontrain::segmetrics::io::{load_label_map, load_probability_map, save_label_map, save_probability_map, write_vi_csv};
use icontrain::segmetrics::{gray_baseline_curve, min_vi, parse_grid, vi_curve, LabelMap};
use icontrain::trainer::{
    predict_image, serve, synthesize_dataset, train_offline, OfflineConfig, ProjectConfig, SynthConfig, TrainError,
    TrainerSettings,
};

#[derive(Parser)]
#[command(name = "icontrain", version, about = "Interactive membrane classifier training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the annotation API with live training and prediction.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train from dense ground truth.
    TrainOffline {
        #[arg(long)]
        images: PathBuf,
        /// Label PNGs named like the images; label 0 is membrane.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Project config supplying architecture, SGD and batch settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a membrane probability map for one image.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// VI of thresholded maps against ground truth, one CSV row per threshold.
    EvaluateVi {
        /// Probability map PNGs with sidecars, or raw images with --gray.
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value = "0.05:0.95:0.05")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
        /// Threshold raw intensities instead of probability maps.
        #[arg(long)]
        gray: bool,
    },
    /// Generate synthetic cell images with ground-truth labels.
    SynthData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<TrainError>().map_or(1, TrainError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn load_truth_dir(dir: &Path) -> anyhow::Result<BTreeMap<String, LabelMap>> {
    let mut truths = BTreeMap::new();
    for path in png_files(dir)? {
        let map = load_label_map(&path)?;
        truths.insert(map.image_id.clone(), map);
    }
    Ok(truths)
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Serve { config } => {
            let config = ProjectConfig::load(&config)?;
            serve(config)?.wait()?;
        }
        Command::TrainOffline { images, labels, out, config } => {
            let config = match config {
                Some(path) => ProjectConfig::load(&path)?,
                None => ProjectConfig::default(),
            };
            config.validate()?;
            let images = ImageSet::load_dir(&images).map_err(|e| TrainError::Config(e.to_string()))?;
            let truths = load_truth_dir(&labels)?;
            let offline = OfflineConfig {
                settings: TrainerSettings::from(&config),
                iterations: config.offline_iterations,
                out: Some(out.clone()),
            };
            let (_, report) = train_offline(&images, &truths, &offline)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            println!("wrote {}", out.display());
        }
        Command::Predict { ckpt, image, stride, out } => {
            if stride == 0 {
                return Err(TrainError::Config("stride must be at least 1".into()).into());
            }
            let model = load_checkpoint(&ckpt)?;
            let img = GrayImage::load_png(&image)?;
            let id = image.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let map = predict_image(&model, &img, &id, stride);
            save_probability_map(&map, &out)?;
            println!("wrote {} (revision {}, stride {stride})", out.display(), model.revision);
        }
        Command::EvaluateVi { maps, truth, grid, out, gray } => {
            let thresholds = parse_grid(&grid).map_err(|e| TrainError::Config(e.to_string()))?;
            let truths: Vec<LabelMap> = load_truth_dir(&truth)?.into_values().collect();
            let curve = if gray {
                let mut images = Vec::new();
                for path in png_files(&maps)? {
                    let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    images.push((id, GrayImage::load_png(&path)?));
                }
                gray_baseline_curve(&images, &truths, &thresholds)?
            } else {
                let mut loaded = Vec::new();
                for path in png_files(&maps)? {
                    loaded.push(load_probability_map(&path)?);
                }
                vi_curve(&loaded, &truths, &thresholds)?
            };
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_vi_csv(std::io::BufWriter::new(file), &curve)?;
            if let Some(best) = min_vi(&curve) {
                println!("min VI {:.4} at threshold {:.2}", best.vi_total, best.threshold);
            }
        }
        Command::SynthData { seed, n, size, out } => {
            let data = synthesize_dataset(&SynthConfig { seed, n_images: n, size, ..Default::default() })?;
            let (image_dir, label_dir) = (out.join("images"), out.join("labels"));
            std::fs::create_dir_all(&image_dir)?;
            std::fs::create_dir_all(&label_dir)?;
            for s in &data {
                s.image.save_png(&image_dir.join(format!("{}.png", s.id)))?;
                save_label_map(&s.truth, &label_dir.join(format!("{}.png", s.id)))?;
            }
            println!("wrote {} images to {} and labels to {}", data.len(), image_dir.display(), label_dir.display());
        }
    }
    Ok(())
}
