//! 8-bit grayscale images and directory catalogs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Decode { path: PathBuf, source: image::ImageError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("buffer of {got} bytes does not match {width}x{height}")]
    Size { width: usize, height: usize, got: usize },
    #[error("no PNG images in {0}")]
    Empty(PathBuf),
}

/// Row-major 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

/// Mirror index into `0..n` without repeating the edge sample
/// (`-1 -> 1`, `n -> n - 2`). Any integer maps into range.
pub fn reflect_index(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    if m >= n as i64 {
        (period - m) as usize
    } else {
        m as usize
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if pixels.len() != width * height || width == 0 || height == 0 {
            return Err(ImageError::Size { width, height, got: pixels.len() });
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage { width, height, pixels: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Intensity / 255 with mirrored borders.
    pub fn normalized_reflected(&self, x: i64, y: i64) -> f32 {
        let xr = reflect_index(x, self.width);
        let yr = reflect_index(y, self.height);
        self.pixels[yr * self.width + xr] as f32 / 255.0
    }

    /// Bilinear sample of intensity / 255 at a real position, mirrored borders.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as i64, y0 as i64);
        let at = |xx: i64, yy: i64| self.normalized_reflected(xx, yy) as f64;
        let top = at(xi, yi) * (1.0 - fx) + at(xi + 1, yi) * fx;
        let bottom = at(xi, yi + 1) * (1.0 - fx) + at(xi + 1, yi + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        let img = image::open(path)
            .map_err(|source| ImageError::Decode { path: path.to_path_buf(), source })?
            .to_luma8();
        let (w, h) = img.dimensions();
        GrayImage::new(w as usize, h as usize, img.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        image::save_buffer(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|source| ImageError::Decode { path: path.to_path_buf(), source })
    }

    pub fn encode_png(&self) -> Vec<u8> {
        encode_gray8(&self.pixels, self.width, self.height)
    }
}

pub(crate) fn encode_gray8(pixels: &[u8], width: usize, height: usize) -> Vec<u8> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(pixels, width as u32, height as u32, image::ExtendedColorType::L8)
        .expect("in-memory PNG encoding");
    out
}

use image::ImageEncoder;

/// Images keyed by id (file stem), iterated in id order.
#[derive(Clone, Debug, Default)]
pub struct ImageSet {
    images: BTreeMap<String, Arc<GrayImage>>,
}

impl ImageSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, image: GrayImage) {
        self.images.insert(id.into(), Arc::new(image));
    }

    pub fn get(&self, id: &str) -> Option<&Arc<GrayImage>> {
        self.images.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arc<GrayImage>)> {
        self.images.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn total_pixels(&self) -> usize {
        self.images.values().map(|i| i.width * i.height).sum()
    }

    /// Every `*.png` in `dir`, keyed by file stem.
    pub fn load_dir(dir: &Path) -> Result<Self, ImageError> {
        let mut set = ImageSet::new();
        for path in png_files(dir)? {
            let id = path.file_stem().unwrap().to_string_lossy().into_owned();
            set.insert(id, GrayImage::load_png(&path)?);
        }
        if set.is_empty() {
            return Err(ImageError::Empty(dir.to_path_buf()));
        }
        Ok(set)
    }
}

/// Sorted `*.png` paths in a directory.
pub fn png_files(dir: &Path) -> Result<Vec<PathBuf>, ImageError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|source| ImageError::Io { path: dir.to_path_buf(), source })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_mirrors_without_edge_repeat() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-4, 5), 4);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(9, 5), 1);
        assert_eq!(reflect_index(-50, 5), reflect_index(50, 5));
        assert_eq!(reflect_index(7, 1), 0);
        for i in -200..200 {
            assert!(reflect_index(i, 7) < 7);
        }
    }

    #[test]
    fn bilinear_is_exact_on_grid() {
        let img = GrayImage::new(3, 2, vec![0, 51, 102, 153, 204, 255]).unwrap();
        assert_eq!(img.bilinear(1.0, 1.0), (204.0f32 / 255.0) as f64);
        let mid = img.bilinear(0.5, 0.0);
        assert!((mid - 25.5 / 255.0).abs() < 1e-7);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::new(4, 3, (0..12).map(|v| v * 20).collect()).unwrap();
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        assert_eq!(GrayImage::load_png(&path).unwrap(), img);
        let set = ImageSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.ids().collect::<Vec<_>>(), vec!["a"]);
    }
}
