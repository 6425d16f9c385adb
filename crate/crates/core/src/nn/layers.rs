//! Per-sample layer kernels. Feature maps are `[channels, height * width]`
//! row-major; convolutions are valid (no padding) with square kernels.

use super::scalar::{gemm, MatRef, Scalar};

/// Unfolds `input [c, h, w]` into `col [c * k * k, ho * wo]`.
pub fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut Vec<T>) {
    let (ho, wo) = (h - k + 1, w - k + 1);
    col.clear();
    col.resize(c * k * k * ho * wo, T::zero());
    let mut row = 0;
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let dst = &mut col[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let src = &plane[(oy + ky) * w + kx..(oy + ky) * w + kx + wo];
                    dst[oy * wo..(oy + 1) * wo].copy_from_slice(src);
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `col` back into `grad [c, h, w]`.
pub fn col2im_add<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, k: usize, grad: &mut [T]) {
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut row = 0;
    for ch in 0..c {
        let plane = &mut grad[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let src = &col[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let dst = &mut plane[(oy + ky) * w + kx..(oy + ky) * w + kx + wo];
                    for (d, &s) in dst.iter_mut().zip(&src[oy * wo..(oy + 1) * wo]) {
                        *d += s;
                    }
                }
                row += 1;
            }
        }
    }
}

/// `out [c_out, ho*wo] = weights [c_out, c_in*k*k] * col + bias`
pub fn conv_forward<T: Scalar>(weights: &[T], bias: &[T], col: &[T], c_out: usize, spatial: usize) -> Vec<T> {
    let fan = weights.len() / c_out;
    let mut out = Vec::with_capacity(c_out * spatial);
    for &b in bias {
        out.extend(std::iter::repeat_n(b, spatial));
    }
    gemm(MatRef::new(weights, c_out, fan), MatRef::new(col, fan, spatial), T::one(), &mut out);
    out
}

/// Dot product with eight independent accumulators so the loop vectorizes.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for i in 0..8 {
            acc[i] += xa[i] * xb[i];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    acc.iter().copied().sum::<T>() + tail
}

/// `y += alpha * x`
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn relu_inplace<T: Scalar>(values: &mut [T]) {
    for v in values.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries whose post-activation output was not positive.
pub fn relu_backward<T: Scalar>(grad: &mut [T], activation: &[T]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x2 stride-2 max pooling with floor semantics. Returns the pooled map and,
/// per output element, the flat input index that won.
pub fn maxpool2<T: Scalar>(input: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + 2 * oy * w + 2 * ox;
                for idx in [best + 1, best + w, best + w + 1] {
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub fn maxpool2_backward<T: Scalar>(grad_out: &[T], arg: &[u32], input_len: usize) -> Vec<T> {
    let mut grad = vec![T::zero(); input_len];
    for (&g, &i) in grad_out.iter().zip(arg) {
        grad[i as usize] += g;
    }
    grad
}

/// Numerically stable two-way softmax.
pub fn softmax2<T: Scalar>(logits: [T; 2]) -> [T; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Cross-entropy `-sum(y * ln p)` of a probability vector against a target.
pub fn cross_entropy<T: Scalar>(probs: [T; 2], target: [T; 2]) -> T {
    let mut loss = T::zero();
    for c in 0..2 {
        if target[c] > T::zero() {
            loss = loss - target[c] * probs[c].ln();
        }
    }
    loss
}

/// Gradient of softmax cross-entropy with respect to the logits: `p - y`.
pub fn logit_gradient<T: Scalar>(probs: [T; 2], target: [T; 2]) -> [T; 2] {
    [probs[0] - target[0], probs[1] - target[1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_round_trip_counts_overlaps() {
        // col2im(im2col(ones)) counts how many windows cover each pixel
        let (c, h, w, k) = (1, 4, 5, 3);
        let input = vec![1.0f64; c * h * w];
        let mut col = Vec::new();
        im2col(&input, c, h, w, k, &mut col);
        let mut back = vec![0.0; c * h * w];
        col2im_add(&col, c, h, w, k, &mut back);
        assert_eq!(back[0], 1.0);
        assert_eq!(back[2 * w + 2], 6.0);
        assert_eq!(back[w + 1], 4.0);
    }

    #[test]
    fn maxpool_floors_odd_sizes() {
        let input: Vec<f64> = (0..15).map(|v| v as f64).collect(); // 1 x 3 x 5
        let (out, arg) = maxpool2(&input, 1, 3, 5);
        assert_eq!(out, vec![6.0, 8.0]);
        assert_eq!(arg, vec![6, 8]);
    }

    #[test]
    fn equal_logits_give_half() {
        assert_eq!(softmax2([0.0f64, 0.0]), [0.5, 0.5]);
        let p = softmax2([1000.0f32, -1000.0]);
        assert!(p[0].is_finite() && (p[0] + p[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradient() {
        let y = [1.0f64, 0.0];
        assert_eq!(cross_entropy(y, y), 0.0);
        assert_eq!(logit_gradient(y, y), [0.0, 0.0]);
    }
}
