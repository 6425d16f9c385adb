//! Files: probability maps as 8-bit PNG (`round(255 p)`) with a JSON sidecar,
//! label maps as 16-bit grayscale PNG, VI curves as CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};

use super::curve::ViResult;
use super::maps::{LabelMap, MapMetadata, ProbabilityMap};
use super::MetricsError;

pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

pub fn quantize(map: &ProbabilityMap) -> Vec<u8> {
    map.values.iter().map(|&p| (255.0 * p).round().clamp(0.0, 255.0) as u8).collect()
}

pub fn encode_probability_png(map: &ProbabilityMap) -> Vec<u8> {
    crate::image::encode_gray8(&quantize(map), map.width, map.height)
}

pub fn save_probability_map(map: &ProbabilityMap, png: &Path) -> Result<(), MetricsError> {
    std::fs::write(png, encode_probability_png(map))?;
    let meta = MapMetadata { model_revision: map.model_revision, stride: map.stride };
    std::fs::write(sidecar_path(png), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

/// Reads a map PNG; the sidecar is required.
pub fn load_probability_map(png: &Path) -> Result<ProbabilityMap, MetricsError> {
    let img = image::open(png).map_err(|e| MetricsError::Image(format!("{}: {e}", png.display())))?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    let meta: MapMetadata = serde_json::from_slice(&std::fs::read(sidecar_path(png))?)?;
    let values = gray.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    let id = png.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    ProbabilityMap::new(id, w as usize, h as usize, values, meta.model_revision, meta.stride)
}

pub fn save_label_map(map: &LabelMap, png: &Path) -> Result<(), MetricsError> {
    let data: Vec<u16> = map
        .labels
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| MetricsError::LabelOverflow(l)))
        .collect::<Result<_, _>>()?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width as u32, map.height as u32, data).expect("label buffer size");
    buf.save(png).map_err(|e| MetricsError::Image(format!("{}: {e}", png.display())))
}

/// Label values are taken verbatim from 8- or 16-bit grayscale PNGs.
pub fn load_label_map(png: &Path) -> Result<LabelMap, MetricsError> {
    let img = image::open(png).map_err(|e| MetricsError::Image(format!("{}: {e}", png.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u32> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(u32::from).collect(),
        other => {
            return Err(MetricsError::Image(format!(
                "{}: label maps must be single-channel, found {:?}",
                png.display(),
                other.color()
            )))
        }
    };
    let id = png.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    LabelMap::new(id, w, h, labels)
}

pub const CSV_HEADER: &str = "threshold,vi_total,vi_split,vi_merge,n_images,log_base";

pub fn write_vi_csv<W: Write>(mut out: W, curve: &[ViResult]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in curve {
        writeln!(
            out,
            "{},{:.9},{:.9},{:.9},{},{}",
            r.threshold, r.vi_total, r.vi_split, r.vi_merge, r.n_images, r.log_base
        )?;
    }
    Ok(())
}
