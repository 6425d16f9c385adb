use super::maps::LabelMap;
use super::MetricsError;

/// Variation of information between two labelings, in bits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViScore {
    /// H(prediction | truth): over-segmentation.
    pub split: f64,
    /// H(truth | prediction): under-segmentation.
    pub merge: f64,
    /// `split + merge`.
    pub total: f64,
}

pub const LOG_BASE: u32 = 2;

/// Conditional entropies from a joint histogram. When `ignore_zero` is set,
/// pixels labeled 0 in either map are left out of the joint distribution.
pub fn variation_of_information(
    pred: &LabelMap,
    truth: &LabelMap,
    ignore_zero: bool,
) -> Result<ViScore, MetricsError> {
    if (pred.width, pred.height) != (truth.width, truth.height) {
        return Err(MetricsError::DimensionMismatch {
            expected: (truth.width, truth.height),
            got: (pred.width, pred.height),
        });
    }
    let mut pairs: Vec<(u32, u32)> = pred
        .labels
        .iter()
        .zip(&truth.labels)
        .filter(|(&a, &b)| !ignore_zero || (a != 0 && b != 0))
        .map(|(&a, &b)| (a, b))
        .collect();
    if pairs.is_empty() {
        return Err(MetricsError::NoCountedPixels);
    }
    let n = pairs.len() as f64;
    let mut pred_counts: Vec<u32> = pairs.iter().map(|p| p.0).collect();
    let mut truth_counts: Vec<u32> = pairs.iter().map(|p| p.1).collect();
    pairs.sort_unstable();
    pred_counts.sort_unstable();
    truth_counts.sort_unstable();
    let pred_marg = run_lengths(&pred_counts);
    let truth_marg = run_lengths(&truth_counts);

    let lookup = |marg: &[(u32, usize)], key: u32| -> f64 {
        let i = marg.binary_search_by_key(&key, |e| e.0).expect("marginal present");
        marg[i].1 as f64
    };
    let mut split = 0.0;
    let mut merge = 0.0;
    for (&(a, b), count) in run_lengths_pairs(&pairs) {
        let n_ab = count as f64;
        let p_ab = n_ab / n;
        split += p_ab * (lookup(&truth_marg, b) / n_ab).log2();
        merge += p_ab * (lookup(&pred_marg, a) / n_ab).log2();
    }
    Ok(ViScore { split, merge, total: split + merge })
}

fn run_lengths(sorted: &[u32]) -> Vec<(u32, usize)> {
    let mut out: Vec<(u32, usize)> = Vec::new();
    for &v in sorted {
        match out.last_mut() {
            Some((k, c)) if *k == v => *c += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

fn run_lengths_pairs(sorted: &[(u32, u32)]) -> Vec<(&(u32, u32), usize)> {
    let mut out: Vec<(&(u32, u32), usize)> = Vec::new();
    for p in sorted {
        match out.last_mut() {
            Some((k, c)) if *k == p => *c += 1,
            _ => out.push((p, 1)),
        }
    }
    out
}
