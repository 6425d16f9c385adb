use crate::image::GrayImage;
use crate::nn::{dense, CnnModel};
use crate::segmetrics::ProbabilityMap;

/// `0, stride, 2 * stride, ...` plus the last index when not already on the grid.
pub fn grid_positions(len: usize, stride: usize) -> Vec<usize> {
    let mut g: Vec<usize> = (0..len).step_by(stride.max(1)).collect();
    if *g.last().unwrap() != len - 1 {
        g.push(len - 1);
    }
    g
}

/// Membrane probability map. With `stride > 1` the classifier runs on a
/// stride-spaced grid (endpoints included) and the remaining pixels are
/// bilinearly interpolated.
pub fn predict_image(model: &CnnModel, image: &GrayImage, image_id: &str, stride: usize) -> ProbabilityMap {
    let stride = stride.max(1);
    let (w, h) = (image.width(), image.height());
    let rows = grid_positions(h, stride);
    let cols = grid_positions(w, stride);
    let grid = dense::membrane_probabilities(model, image, &rows, &cols);
    let values = if stride == 1 {
        grid
    } else {
        let col_weights = interpolation_weights(&cols, w);
        let row_weights = interpolation_weights(&rows, h);
        let nc = cols.len();
        let mut v = Vec::with_capacity(w * h);
        for &(r0, r1, fy) in &row_weights {
            for &(c0, c1, fx) in &col_weights {
                let top = grid[r0 * nc + c0] * (1.0 - fx) + grid[r0 * nc + c1] * fx;
                let bottom = grid[r1 * nc + c0] * (1.0 - fx) + grid[r1 * nc + c1] * fx;
                v.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
            }
        }
        v
    };
    ProbabilityMap::new(image_id, w, h, values, model.revision, stride).expect("probabilities in [0, 1]")
}

/// For each pixel: bracketing grid node indices and the fractional weight of the second.
fn interpolation_weights(grid: &[usize], len: usize) -> Vec<(usize, usize, f32)> {
    let mut out = Vec::with_capacity(len);
    let mut seg = 0;
    for p in 0..len {
        while seg + 1 < grid.len() && grid[seg + 1] <= p {
            seg += 1;
        }
        if seg + 1 == grid.len() {
            out.push((seg, seg, 0.0));
        } else {
            let (a, b) = (grid[seg], grid[seg + 1]);
            out.push((seg, seg + 1, (p - a) as f32 / (b - a) as f32));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;

    #[test]
    fn grid_includes_endpoints() {
        assert_eq!(grid_positions(256, 4).len(), 65);
        assert_eq!(grid_positions(9, 4), vec![0, 4, 8]);
        assert_eq!(grid_positions(5, 1), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn zero_model_predicts_half_everywhere() {
        let model = CnnModel::zeroed(Architecture { patch_size: 21, conv1_filters: 2, conv2_filters: 2, fc_units: 3 }).unwrap();
        let img = GrayImage::new(30, 20, (0..600).map(|i| (i % 256) as u8).collect()).unwrap();
        for stride in [1, 4] {
            let map = predict_image(&model, &img, "z", stride);
            assert!(map.values.iter().all(|&v| v == 0.5));
            assert_eq!(map.stride, stride);
        }
    }

    #[test]
    fn grid_nodes_keep_exact_values() {
        let model = CnnModel::new(Architecture { patch_size: 21, conv1_filters: 3, conv2_filters: 3, fc_units: 5 }, 9).unwrap();
        let img = GrayImage::new(23, 17, (0..391).map(|i| ((i * 29) % 256) as u8).collect()).unwrap();
        let dense = predict_image(&model, &img, "d", 1);
        let coarse = predict_image(&model, &img, "d", 4);
        for &y in &grid_positions(17, 4) {
            for &x in &grid_positions(23, 4) {
                assert!((dense.get(x, y) - coarse.get(x, y)).abs() < 1e-6);
            }
        }
    }
}
