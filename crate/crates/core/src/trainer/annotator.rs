//! A scripted stand-in for a human annotator.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::sampling::{ClassLabel, NewStroke};
use crate::segmetrics::{LabelMap, ProbabilityMap};

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatorConfig {
    /// Radius of the disc painted around each chosen pixel; 0 paints single pixels.
    pub brush_radius: usize,
    pub author: String,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        AnnotatorConfig { brush_radius: 2, author: "simulated".into() }
    }
}

/// Strokes covering up to `budget` pixels of `truth`, split evenly between
/// the classes and skipping pixels in `annotated`.
///
/// With a current map, brush centres go to the pixels where the membrane
/// probability disagrees most with the truth (ties in raster order), and
/// each paints the not yet annotated pixels of the same true class within
/// `brush_radius`. Without a map, single pixels are drawn uniformly at
/// random per class.
pub fn simulate_annotator<R: Rng + ?Sized>(
    truth: &LabelMap,
    current: Option<&ProbabilityMap>,
    budget: usize,
    annotated: &HashSet<(u32, u32)>,
    config: &AnnotatorConfig,
    rng: &mut R,
) -> Vec<NewStroke> {
    if let Some(map) = current {
        assert_eq!((map.width, map.height), (truth.width, truth.height), "map and truth differ in size");
    }
    let is_class = |x: usize, y: usize, class: ClassLabel| (truth.get(x, y) == 0) == (class == ClassLabel::Membrane);
    let quotas = [budget - budget / 2, budget / 2];
    let mut strokes = Vec::new();
    for class in ClassLabel::ALL {
        let quota = quotas[class.index()];
        if quota == 0 {
            continue;
        }
        let mut candidates: Vec<(u32, u32)> = Vec::new();
        for y in 0..truth.height {
            for x in 0..truth.width {
                let pos = (x as u32, y as u32);
                if is_class(x, y, class) && !annotated.contains(&pos) {
                    candidates.push(pos);
                }
            }
        }
        let chosen: Vec<(u32, u32)> = match current {
            Some(map) => {
                let target = if class == ClassLabel::Membrane { 1.0 } else { 0.0 };
                let disagreement = |&(x, y): &(u32, u32)| (target - map.get(x as usize, y as usize)).abs();
                candidates.sort_by(|a, b| disagreement(b).total_cmp(&disagreement(a)));
                let r = config.brush_radius as i64;
                let mut taken: HashSet<(u32, u32)> = HashSet::new();
                let mut chosen = Vec::new();
                'centres: for &(cx, cy) in &candidates {
                    if taken.contains(&(cx, cy)) {
                        continue;
                    }
                    for dy in -r..=r {
                        for dx in -r..=r {
                            if dx * dx + dy * dy > r * r {
                                continue;
                            }
                            let (x, y) = (cx as i64 + dx, cy as i64 + dy);
                            if x < 0 || y < 0 || x >= truth.width as i64 || y >= truth.height as i64 {
                                continue;
                            }
                            let pos = (x as u32, y as u32);
                            if is_class(x as usize, y as usize, class) && !annotated.contains(&pos) && taken.insert(pos) {
                                chosen.push(pos);
                                if chosen.len() == quota {
                                    break 'centres;
                                }
                            }
                        }
                    }
                }
                chosen
            }
            None => candidates.choose_multiple(rng, quota).copied().collect(),
        };
        if !chosen.is_empty() {
            strokes.push(NewStroke {
                image_id: truth.image_id.clone(),
                class_label: class,
                pixels: chosen.iter().map(|&(x, y)| [x as i64, y as i64]).collect(),
                author: config.author.clone(),
            });
        }
    }
    strokes
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn truth() -> LabelMap {
        // membrane column at x = 2
        let labels = (0..25).map(|i| if i % 5 == 2 { 0 } else { 1 + (i % 5 > 2) as u32 }).collect();
        LabelMap::new("t", 5, 5, labels).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    fn pixel() -> AnnotatorConfig {
        AnnotatorConfig { brush_radius: 0, author: "a".into() }
    }

    #[test]
    fn zero_budget_gives_no_strokes() {
        assert!(simulate_annotator(&truth(), None, 0, &HashSet::new(), &pixel(), &mut rng()).is_empty());
    }

    #[test]
    fn random_seeding_is_balanced_and_correct() {
        let t = truth();
        let strokes = simulate_annotator(&t, None, 6, &HashSet::new(), &pixel(), &mut rng());
        assert_eq!(strokes.len(), 2);
        for s in &strokes {
            assert_eq!(s.pixels.len(), 3);
            for p in &s.pixels {
                let membrane = t.get(p[0] as usize, p[1] as usize) == 0;
                assert_eq!(membrane, s.class_label == ClassLabel::Membrane);
            }
        }
    }

    #[test]
    fn picks_worst_disagreement_and_skips_annotated() {
        let t = truth();
        let mut values = vec![0.1f32; 25];
        for i in [7, 12, 17, 22] {
            values[i] = 0.9; // remaining membrane pixels predicted correctly
        }
        values[2] = 0.2; // membrane (2,0) badly predicted
        values[6] = 0.8; // non-membrane (1,1) badly predicted
        values[0] = 0.7; // non-membrane (0,0) annotated already
        let map = ProbabilityMap::new("t", 5, 5, values, 1, 1).unwrap();
        let annotated: HashSet<_> = [(0, 0)].into_iter().collect();
        let strokes = simulate_annotator(&t, Some(&map), 2, &annotated, &pixel(), &mut rng());
        let by_class = |c| strokes.iter().find(|s| s.class_label == c).unwrap().pixels.clone();
        assert_eq!(by_class(ClassLabel::NonMembrane), vec![[1, 1]]);
        assert_eq!(by_class(ClassLabel::Membrane), vec![[2, 0]]);
    }

    #[test]
    fn perfect_map_still_spends_budget_with_zero_disagreement() {
        let t = truth();
        let values = (0..25).map(|i| if i % 5 == 2 { 1.0 } else { 0.0 }).collect();
        let map = ProbabilityMap::new("t", 5, 5, values, 1, 1).unwrap();
        let strokes = simulate_annotator(&t, Some(&map), 4, &HashSet::new(), &pixel(), &mut rng());
        let total: usize = strokes.iter().map(|s| s.pixels.len()).sum();
        assert_eq!(total, 4);
        for s in &strokes {
            for p in &s.pixels {
                let target = if s.class_label == ClassLabel::Membrane { 1.0 } else { 0.0 };
                assert_eq!(map.get(p[0] as usize, p[1] as usize), target);
            }
        }
    }

    #[test]
    fn brush_paints_same_class_disc_around_worst_pixel() {
        let t = truth();
        let mut values: Vec<f32> = (0..25).map(|i| if i % 5 == 2 { 1.0 } else { 0.0 }).collect();
        values[0] = 0.9; // non-membrane (0,0) is the worst mistake
        let map = ProbabilityMap::new("t", 5, 5, values, 1, 1).unwrap();
        let config = AnnotatorConfig { brush_radius: 1, author: "a".into() };
        let strokes = simulate_annotator(&t, Some(&map), 8, &HashSet::new(), &config, &mut rng());
        let non = strokes.iter().find(|s| s.class_label == ClassLabel::NonMembrane).unwrap();
        // disc of radius 1 around (0,0), clipped to the image: (0,0), (1,0), (0,1)
        let mut first: Vec<[i64; 2]> = non.pixels[..3].to_vec();
        first.sort();
        assert_eq!(first, vec![[0, 0], [0, 1], [1, 0]]);
        for s in &strokes {
            for p in &s.pixels {
                let membrane = t.get(p[0] as usize, p[1] as usize) == 0;
                assert_eq!(membrane, s.class_label == ClassLabel::Membrane);
            }
        }
    }
}
