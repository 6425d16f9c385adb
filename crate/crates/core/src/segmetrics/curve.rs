use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::components::{connected_components, BinaryMask};
use super::maps::{LabelMap, ProbabilityMap};
use super::vi::{variation_of_information, ViScore, LOG_BASE};
use super::MetricsError;
use crate::image::GrayImage;

/// Mean VI over images at one threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViResult {
    pub threshold: f64,
    pub vi_total: f64,
    pub vi_split: f64,
    pub vi_merge: f64,
    pub n_images: usize,
    pub log_base: u32,
}

/// Which side of the threshold counts as membrane when thresholding raw
/// intensities. Recorded alongside gray-baseline results.
pub const GRAY_POLARITY: &str = "membrane iff intensity/255 <= 1 - t";

/// Membrane iff `value >= t`.
pub fn threshold_map(map: &ProbabilityMap, t: f64) -> Result<BinaryMask, MetricsError> {
    check_threshold(t)?;
    let membrane = map.values.iter().map(|&v| v as f64 >= t).collect();
    BinaryMask::new(map.width, map.height, membrane)
}

/// Dark pixels are membrane: `intensity / 255 <= 1 - t`.
pub fn threshold_gray(image: &GrayImage, t: f64) -> Result<BinaryMask, MetricsError> {
    check_threshold(t)?;
    let membrane = image.pixels().iter().map(|&v| v as f64 / 255.0 <= 1.0 - t).collect();
    BinaryMask::new(image.width(), image.height(), membrane)
}

fn check_threshold(t: f64) -> Result<(), MetricsError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(MetricsError::InvalidThreshold(t));
    }
    Ok(())
}

/// `start, start + step, ..., stop` (inclusive within rounding).
pub fn threshold_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, MetricsError> {
    if !(step > 0.0) || start > stop || !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&stop) {
        return Err(MetricsError::InvalidGrid(format!("{start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// 0.05 to 0.95 in steps of 0.05.
pub fn default_grid() -> Vec<f64> {
    threshold_grid(0.05, 0.95, 0.05).expect("valid default grid")
}

/// Parses `start:stop:step`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, MetricsError> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| MetricsError::InvalidGrid(spec.to_string()))?;
    match parts[..] {
        [a, b, c] => threshold_grid(a, b, c),
        _ => Err(MetricsError::InvalidGrid(spec.to_string())),
    }
}

/// Segmentation of one mask: connected interiors compared against truth.
pub fn segment_vi(mask: &BinaryMask, truth: &LabelMap) -> Result<ViScore, MetricsError> {
    let (pred, _) = connected_components(mask, &truth.image_id);
    variation_of_information(&pred, truth, true)
}

fn pair<'a, T>(
    items: &'a [T],
    id: impl Fn(&T) -> &str,
    truths: &'a [LabelMap],
) -> Result<Vec<(&'a T, &'a LabelMap)>, MetricsError> {
    let by_id: HashMap<&str, &LabelMap> = truths.iter().map(|t| (t.image_id.as_str(), t)).collect();
    let mut used = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let key = id(item);
        let truth = by_id.get(key).ok_or_else(|| MetricsError::Unpaired(key.to_string()))?;
        used.insert(key.to_string());
        out.push((item, *truth));
    }
    if let Some(t) = truths.iter().find(|t| !used.contains(&t.image_id)) {
        return Err(MetricsError::Unpaired(t.image_id.clone()));
    }
    Ok(out)
}

fn average_curve<F>(n_images: usize, thresholds: &[f64], per_image: F) -> Result<Vec<ViResult>, MetricsError>
where
    F: Fn(usize, f64) -> Result<ViScore, MetricsError> + Sync,
{
    if thresholds.is_empty() {
        return Err(MetricsError::InvalidGrid("empty threshold list".into()));
    }
    if n_images == 0 {
        return Err(MetricsError::NoImages);
    }
    for &t in thresholds {
        check_threshold(t)?;
    }
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .iter()
        .map(|&t| {
            // An image left with no counted pixels (everything membrane) has
            // no defined VI, and neither does the mean at that threshold.
            let undefined = ViScore { split: f64::NAN, merge: f64::NAN, total: f64::NAN };
            let scores: Vec<ViScore> = (0..n_images)
                .into_par_iter()
                .map(|i| match per_image(i, t) {
                    Err(MetricsError::NoCountedPixels) => Ok(undefined),
                    other => other,
                })
                .collect::<Result<_, _>>()?;
            let k = n_images as f64;
            Ok(ViResult {
                threshold: t,
                vi_total: scores.iter().map(|s| s.total).sum::<f64>() / k,
                vi_split: scores.iter().map(|s| s.split).sum::<f64>() / k,
                vi_merge: scores.iter().map(|s| s.merge).sum::<f64>() / k,
                n_images,
                log_base: LOG_BASE,
            })
        })
        .collect()
}

/// Threshold, label connected interiors and average VI across images, one
/// point per threshold in ascending order.
pub fn vi_curve(
    maps: &[ProbabilityMap],
    truths: &[LabelMap],
    thresholds: &[f64],
) -> Result<Vec<ViResult>, MetricsError> {
    let pairs = pair(maps, |m| m.image_id.as_str(), truths)?;
    average_curve(pairs.len(), thresholds, |i, t| {
        let (map, truth) = pairs[i];
        segment_vi(&threshold_map(map, t)?, truth)
    })
}

/// Same pipeline on raw intensities, dark = membrane.
pub fn gray_baseline_curve(
    images: &[(String, GrayImage)],
    truths: &[LabelMap],
    thresholds: &[f64],
) -> Result<Vec<ViResult>, MetricsError> {
    let pairs = pair(images, |(id, _)| id.as_str(), truths)?;
    average_curve(pairs.len(), thresholds, |i, t| {
        let ((_, image), truth) = pairs[i];
        segment_vi(&threshold_gray(image, t)?, truth)
    })
}

/// Lowest defined `vi_total` on a curve.
pub fn min_vi(curve: &[ViResult]) -> Option<ViResult> {
    curve.iter().copied().filter(|r| r.vi_total.is_finite()).min_by(|a, b| a.vi_total.total_cmp(&b.vi_total))
}
