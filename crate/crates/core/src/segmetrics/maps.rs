use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Per-pixel membrane probability for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub model_revision: u64,
    /// 1 = every pixel evaluated; k > 1 = k-spaced grid, bilinearly filled.
    pub stride: usize,
}

impl ProbabilityMap {
    pub fn new(
        image_id: impl Into<String>,
        width: usize,
        height: usize,
        values: Vec<f32>,
        model_revision: u64,
        stride: usize,
    ) -> Result<Self, MetricsError> {
        if values.len() != width * height {
            return Err(MetricsError::DimensionMismatch {
                expected: (width, height),
                got: (values.len(), 1),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MetricsError::InvalidProbability(*v));
        }
        Ok(ProbabilityMap { image_id: image_id.into(), width, height, values, model_revision, stride: stride.max(1) })
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// Sidecar metadata written next to a probability-map PNG.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub model_revision: u64,
    pub stride: usize,
}

/// Region labeling: 0 marks membrane/boundary, positive values are regions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(image_id: impl Into<String>, width: usize, height: usize, labels: Vec<u32>) -> Result<Self, MetricsError> {
        if labels.len() != width * height {
            return Err(MetricsError::DimensionMismatch { expected: (width, height), got: (labels.len(), 1) });
        }
        Ok(LabelMap { image_id: image_id.into(), width, height, labels })
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Whether every positive label occupies a single 4-connected set.
    pub fn labels_are_connected(&self) -> bool {
        use std::collections::HashMap;
        let mut first: HashMap<u32, usize> = HashMap::new();
        let mut sizes: HashMap<u32, usize> = HashMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                first.entry(l).or_insert(i);
                *sizes.entry(l).or_default() += 1;
            }
        }
        let mut seen = vec![false; self.labels.len()];
        for (&label, &start) in &first {
            let mut stack = vec![start];
            seen[start] = true;
            let mut count = 0;
            while let Some(i) = stack.pop() {
                count += 1;
                let (x, y) = (i % self.width, i / self.width);
                let mut visit = |j: usize| {
                    if !seen[j] && self.labels[j] == label {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < self.width {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - self.width);
                }
                if y + 1 < self.height {
                    visit(i + self.width);
                }
            }
            if count != sizes[&label] {
                return false;
            }
        }
        true
    }
}
