//! Synthetic cell-like images with dense ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::image::{reflect_index, GrayImage};
use crate::segmetrics::{connected_components, BinaryMask, LabelMap};

use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_images: usize,
    pub size: usize,
    /// Mean region area in pixels; sets the number of seed points.
    pub mean_cell_area: usize,
    /// Dark organelle-like blobs per region on average.
    pub blobs_per_cell: f64,
    /// Gaussian noise added after blurring, in gray levels.
    pub noise_sigma: f64,
    /// Weakest membrane contrast as a fraction of the full cell-to-membrane step.
    pub min_contrast: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_images: 10,
            size: 256,
            mean_cell_area: 1024,
            blobs_per_cell: 0.5,
            noise_sigma: 25.0,
            min_contrast: 0.2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthImage {
    pub id: String,
    pub image: GrayImage,
    pub truth: LabelMap,
    /// Region index of every pixel in the nearest-seed partition.
    pub regions: Vec<u32>,
    /// Pixels that touch a different region in their 4-neighbourhood.
    pub boundary: Vec<bool>,
}

const BOUNDARY_LEVEL: f64 = 60.0;
const CELL_LEVEL: f64 = 160.0;
const CELL_SPREAD: f64 = 25.0;
const BLOB_LEVEL: f64 = 85.0;

/// Generates `n_images` images of `size`×`size`, each from its own stream of
/// the seeded generator so image `k` does not depend on how many are requested.
pub fn synthesize_dataset(config: &SynthConfig) -> Result<Vec<SynthImage>, TrainError> {
    if config.size < 128 {
        return Err(TrainError::Config(format!("synthetic image size must be at least 128, got {}", config.size)));
    }
    if config.mean_cell_area == 0
        || !(config.noise_sigma >= 0.0)
        || !(config.blobs_per_cell >= 0.0)
        || !(0.0..=1.0).contains(&config.min_contrast)
    {
        return Err(TrainError::Config("invalid synthetic data parameters".into()));
    }
    Ok((0..config.n_images).map(|k| synthesize_one(config, k)).collect())
}

fn synthesize_one(config: &SynthConfig, k: usize) -> SynthImage {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(k as u64);
    let n = config.size;
    let n_seeds = (n * n / config.mean_cell_area).max(2);
    let seeds: Vec<(f64, f64)> =
        (0..n_seeds).map(|_| (rng.random_range(0.0..n as f64), rng.random_range(0.0..n as f64))).collect();

    let mut regions = vec![0u32; n * n];
    for y in 0..n {
        for x in 0..n {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut best = (f64::INFINITY, 0u32);
            for (i, &(sx, sy)) in seeds.iter().enumerate() {
                let d = (px - sx).powi(2) + (py - sy).powi(2);
                if d < best.0 {
                    best = (d, i as u32);
                }
            }
            regions[y * n + x] = best.1;
        }
    }
    let boundary = region_adjacency(&regions, n, n);

    let offsets: Vec<f64> = (0..n_seeds).map(|_| rng.random_range(-CELL_SPREAD..CELL_SPREAD)).collect();
    let contrast = contrast_field(config.min_contrast, n, &mut rng);
    let mut canvas: Vec<f64> = (0..n * n)
        .map(|i| {
            let cell = CELL_LEVEL + offsets[regions[i] as usize];
            if boundary[i] {
                cell - contrast[i] * (cell - BOUNDARY_LEVEL)
            } else {
                cell
            }
        })
        .collect();

    let n_blobs = (n_seeds as f64 * config.blobs_per_cell).round() as usize;
    for _ in 0..n_blobs {
        let (cx, cy) = (rng.random_range(0.0..n as f64), rng.random_range(0.0..n as f64));
        let r: f64 = rng.random_range(1.5..3.5);
        let x0 = (cx - r).floor().max(0.0) as usize;
        let y0 = (cy - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize).min(n - 1);
        let y1 = ((cy + r).ceil() as usize).min(n - 1);
        let region = regions[(cy as usize).min(n - 1) * n + (cx as usize).min(n - 1)];
        for y in y0..=y1 {
            for x in x0..=x1 {
                let i = y * n + x;
                let inside = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2) <= r * r;
                // keep blobs clear of the boundary so the truth stays unambiguous
                if inside && !boundary[i] && regions[i] == region {
                    canvas[i] = BLOB_LEVEL;
                }
            }
        }
    }

    let mut blurred = blur3(&canvas, n, n);
    if config.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, config.noise_sigma).expect("sigma checked");
        for v in blurred.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    let pixels = blurred.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();

    let id = format!("synth_{k:03}");
    let mask = BinaryMask { width: n, height: n, membrane: boundary.clone() };
    let (truth, _) = connected_components(&mask, &id);
    SynthImage { id, image: GrayImage::new(n, n, pixels).expect("sized"), truth, regions, boundary }
}

/// Smooth field in `[min, 1]` from a few random plane waves, so membrane
/// strength fades in and out along each boundary.
fn contrast_field<R: Rng>(min: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU / rng.random_range(30.0..90.0);
            (k * theta.cos(), k * theta.sin(), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let mut field = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let s: f64 = waves.iter().map(|&(kx, ky, ph)| (kx * x as f64 + ky * y as f64 + ph).sin()).sum();
            // sum of six unit sines; scale to roughly [0, 1] and clip
            let u = (0.5 + s / 4.0).clamp(0.0, 1.0);
            field.push(min + (1.0 - min) * u);
        }
    }
    field
}

/// Marks every pixel that has a 4-neighbour in a different region.
pub(crate) fn region_adjacency(regions: &[u32], width: usize, height: usize) -> Vec<bool> {
    let mut out = vec![false; regions.len()];
    for y in 0..height {
        for x in 0..width {
            let r = regions[y * width + x];
            let differs = (x > 0 && regions[y * width + x - 1] != r)
                || (x + 1 < width && regions[y * width + x + 1] != r)
                || (y > 0 && regions[(y - 1) * width + x] != r)
                || (y + 1 < height && regions[(y + 1) * width + x] != r);
            out[y * width + x] = differs;
        }
    }
    out
}

/// Separable [1 2 1]/4 smoothing with mirrored borders.
fn blur3(src: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let l = src[y * width + reflect_index(x as i64 - 1, width)];
            let r = src[y * width + reflect_index(x as i64 + 1, width)];
            tmp[y * width + x] = 0.25 * l + 0.5 * src[y * width + x] + 0.25 * r;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        let up = reflect_index(y as i64 - 1, height);
        let down = reflect_index(y as i64 + 1, height);
        for x in 0..width {
            out[y * width + x] = 0.25 * tmp[up * width + x] + 0.5 * tmp[y * width + x] + 0.25 * tmp[down * width + x];
        }
    }
    out
}
