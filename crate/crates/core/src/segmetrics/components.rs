use super::maps::LabelMap;
use super::MetricsError;

/// Thresholded map: `true` = membrane.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub membrane: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, membrane: Vec<bool>) -> Result<Self, MetricsError> {
        if membrane.len() != width * height {
            return Err(MetricsError::DimensionMismatch { expected: (width, height), got: (membrane.len(), 1) });
        }
        Ok(BinaryMask { width, height, membrane })
    }

    pub fn interior_count(&self) -> usize {
        self.membrane.iter().filter(|m| !**m).count()
    }
}

/// Labels each maximal 4-connected set of interior (non-membrane) pixels with
/// a distinct positive integer, numbered in raster order of first pixel.
/// Membrane pixels get 0. Returns the labeling and the component count.
pub fn connected_components(mask: &BinaryMask, image_id: &str) -> (LabelMap, u32) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = std::collections::VecDeque::new();
    for start in 0..w * h {
        if mask.membrane[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let neighbours = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in neighbours.into_iter().flatten() {
                if !mask.membrane[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    (LabelMap { image_id: image_id.to_string(), width: w, height: h, labels }, next)
}
