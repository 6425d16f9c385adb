use crate::image::GrayImage;
use crate::nn::Patch;

use super::SamplingError;

/// Square window centred on `center`, rotated by `angle_degrees` about it,
/// bilinearly sampled with mirrored borders. Angle 0 reads pixels directly.
pub fn extract_patch(
    image: &GrayImage,
    center: (i64, i64),
    patch_size: usize,
    angle_degrees: f64,
) -> Result<Patch, SamplingError> {
    let (cx, cy) = center;
    if !image.contains(cx, cy) {
        return Err(SamplingError::CenterOutOfBounds { x: cx, y: cy });
    }
    let r = (patch_size / 2) as i64;
    let mut pixels = Vec::with_capacity(patch_size * patch_size);
    let angle = angle_degrees.rem_euclid(360.0);
    if angle == 0.0 {
        for dy in -r..=r {
            for dx in -r..=r {
                pixels.push(image.normalized_reflected(cx + dx, cy + dy));
            }
        }
    } else {
        let (sin, cos) = angle.to_radians().sin_cos();
        for dy in -r..=r {
            for dx in -r..=r {
                let (fx, fy) = (dx as f64, dy as f64);
                let sx = cx as f64 + cos * fx - sin * fy;
                let sy = cy as f64 + sin * fx + cos * fy;
                pixels.push(image.bilinear(sx, sy).clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(Patch::new(patch_size, pixels).expect("square patch with values in [0, 1]"))
}
