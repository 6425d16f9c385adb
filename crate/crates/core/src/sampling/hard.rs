use std::cmp::Ordering;

use super::batch::Sample;

/// Fraction of each iteration's poorly performing samples carried forward.
pub const RETENTION_CAP: f64 = 0.5;
pub const DEFAULT_DELTA: f32 = 0.5;

/// Poorly performing samples kept for the next iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HardExampleBuffer {
    pub entries: Vec<Sample>,
    /// Size of the poorly performing set this buffer was cut from.
    pub source_size: usize,
}

impl HardExampleBuffer {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Euclidean distance between the one-hot target and a prediction.
pub fn prediction_error(sample: &Sample, prediction: [f32; 2]) -> f32 {
    let y = sample.class_label.one_hot();
    let d0 = y[0] - prediction[0];
    let d1 = y[1] - prediction[1];
    (d0 * d0 + d1 * d1).sqrt()
}

/// Records `last_error` on every evaluated sample and returns those whose
/// error strictly exceeds `delta`.
pub fn select_hard_examples(evaluated: &mut [(Sample, [f32; 2])], delta: f32) -> Vec<Sample> {
    let mut hard = Vec::new();
    for (sample, prediction) in evaluated.iter_mut() {
        let err = prediction_error(sample, *prediction);
        sample.last_error = Some(err);
        if err > delta {
            hard.push(sample.clone());
        }
    }
    hard
}

fn worst_first(a: &Sample, b: &Sample) -> Ordering {
    let ea = a.last_error.unwrap_or(0.0);
    let eb = b.last_error.unwrap_or(0.0);
    eb.total_cmp(&ea)
        .then(b.seq.cmp(&a.seq))
        .then(a.center.cmp(&b.center))
        .then(a.image_id.cmp(&b.image_id))
        .then(a.rotation_angle.total_cmp(&b.rotation_angle))
}

/// Keeps the `floor(0.5 * |hard|)` samples with the largest error. Ties go to
/// the newer annotation, then to the lexicographically smaller center.
pub fn retain_for_next_iteration(mut hard: Vec<Sample>) -> HardExampleBuffer {
    let source_size = hard.len();
    let keep = (RETENTION_CAP * source_size as f64).floor() as usize;
    hard.sort_by(worst_first);
    hard.truncate(keep);
    HardExampleBuffer { entries: hard, source_size }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::ClassLabel;
    use std::sync::Arc;

    fn sample(class: ClassLabel, seq: u64, x: u32) -> Sample {
        Sample {
            image_id: Arc::from("i"),
            center: (x, 0),
            class_label: class,
            seq,
            rotation_angle: 0.0,
            last_error: None,
        }
    }

    #[test]
    fn hand_evaluated_norms() {
        let mut ev = vec![
            (sample(ClassLabel::NonMembrane, 1, 0), [0.9, 0.1]),
            (sample(ClassLabel::NonMembrane, 1, 1), [0.4, 0.6]),
            (sample(ClassLabel::Membrane, 1, 2), [0.0, 1.0]),
        ];
        let hard = select_hard_examples(&mut ev, 0.5);
        assert_eq!(hard.len(), 1);
        assert_eq!(hard[0].center, (1, 0));
        assert!((ev[0].0.last_error.unwrap() - 0.141_421_36).abs() < 1e-6);
        assert!((ev[1].0.last_error.unwrap() - 0.848_528_1).abs() < 1e-6);
        assert_eq!(ev[2].0.last_error, Some(0.0));
    }

    #[test]
    fn retention_sizes() {
        let mk = |n: usize| {
            (0..n)
                .map(|i| {
                    let mut s = sample(ClassLabel::Membrane, 1, i as u32);
                    s.last_error = Some(0.6 + i as f32 * 0.01);
                    s
                })
                .collect::<Vec<_>>()
        };
        let b = retain_for_next_iteration(mk(10));
        assert_eq!(b.len(), 5);
        let kept: Vec<u32> = b.entries.iter().map(|s| s.center.0).collect();
        assert_eq!(kept, vec![9, 8, 7, 6, 5]);
        assert_eq!(retain_for_next_iteration(mk(7)).len(), 3);
        assert!(retain_for_next_iteration(Vec::new()).is_empty());
    }

    #[test]
    fn ties_prefer_newer_then_smaller_center() {
        let mut v = Vec::new();
        for (seq, x) in [(1, 5), (3, 9), (3, 2), (2, 0)] {
            let mut s = sample(ClassLabel::Membrane, seq, x);
            s.last_error = Some(0.9);
            v.push(s);
        }
        let b = retain_for_next_iteration(v);
        let kept: Vec<(u64, u32)> = b.entries.iter().map(|s| (s.seq, s.center.0)).collect();
        assert_eq!(kept, vec![(3, 2), (3, 9)]);
    }
}
