//! Whole-image inference that reuses shared computation between
//! neighbouring patches.
//!
//! Every stage is evaluated at every pixel offset of the mirrored image:
//! pooling windows become dilated (1, then 2), the second convolution uses
//! dilation 2, and the fully connected layer reads its input on a dilation-4
//! grid. The value produced for a pixel equals `forward` on that pixel's
//! unrotated patch up to floating-point summation order.

use rayon::prelude::*;

use super::layers::{conv_forward, im2col, relu_inplace, softmax2};
use super::network::{CnnModel, KERNEL};
use super::scalar::{gemm, MatRef};
use crate::image::GrayImage;

/// Output rows evaluated together; bounds the size of intermediate maps.
const BAND_ROWS: usize = 128;

/// Dense max over offsets `{0, step}` in both axes.
fn dilated_max(input: &[f32], c: usize, h: usize, w: usize, step: usize) -> (Vec<f32>, usize, usize) {
    let (ho, wo) = (h - step, w - step);
    let mut out = vec![0.0f32; c * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(ch, dst)| {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for y in 0..ho {
            let r0 = &plane[y * w..y * w + w];
            let r1 = &plane[(y + step) * w..(y + step) * w + w];
            for x in 0..wo {
                dst[y * wo + x] = r0[x].max(r0[x + step]).max(r1[x]).max(r1[x + step]);
            }
        }
    });
    (out, ho, wo)
}

/// Membrane probabilities at `rows x cols` (row-major), each pixel classified
/// from the patch centred on it with mirrored borders.
pub fn membrane_probabilities(model: &CnnModel, image: &GrayImage, rows: &[usize], cols: &[usize]) -> Vec<f32> {
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    let mut start = 0;
    while start < rows.len() {
        let mut end = start + 1;
        while end < rows.len() && rows[end] - rows[start] < BAND_ROWS {
            end += 1;
        }
        out.extend(band(model, image, &rows[start..end], cols));
        start = end;
    }
    out
}

fn band(model: &CnnModel, image: &GrayImage, rows: &[usize], cols: &[usize]) -> Vec<f32> {
    let a = model.architecture();
    let p = &model.params;
    let ps = a.patch_size;
    let r = (ps / 2) as i64;
    let y0 = *rows.iter().min().unwrap();
    let y1 = *rows.iter().max().unwrap();

    // mirrored window: local row u is image row y0 + u - r
    let hl = y1 - y0 + ps;
    let wl = image.width() + ps - 1;
    let mut padded = vec![0.0f32; hl * wl];
    for u in 0..hl {
        for v in 0..wl {
            padded[u * wl + v] = image.normalized_reflected(v as i64 - r, (y0 + u) as i64 - r);
        }
    }

    let (h1, w1) = (hl - KERNEL + 1, wl - KERNEL + 1);
    let mut col = Vec::new();
    im2col(&padded, 1, hl, wl, KERNEL, &mut col);
    let mut d1 = conv_forward(p.conv1_weights.data(), p.conv1_bias.data(), &col, a.conv1_filters, h1 * w1);
    drop(col);
    relu_inplace(&mut d1);
    let (p1, hp1, wp1) = dilated_max(&d1, a.conv1_filters, h1, w1, 1);
    drop(d1);

    // second convolution, dilation 2, one output row at a time
    let span = 2 * (KERNEL - 1);
    let (h2, w2) = (hp1 - span, wp1 - span);
    let f1 = a.conv1_filters;
    let f2 = a.conv2_filters;
    let fan2 = f1 * KERNEL * KERNEL;
    let conv2_rows: Vec<Vec<f32>> = (0..h2)
        .into_par_iter()
        .map(|y| {
            let mut col = vec![0.0f32; fan2 * w2];
            for c in 0..f1 {
                let plane = &p1[c * hp1 * wp1..(c + 1) * hp1 * wp1];
                for ky in 0..KERNEL {
                    let src = &plane[(y + 2 * ky) * wp1..(y + 2 * ky + 1) * wp1];
                    for kx in 0..KERNEL {
                        let row = (c * KERNEL + ky) * KERNEL + kx;
                        let dst = &mut col[row * w2..(row + 1) * w2];
                        for (x, d) in dst.iter_mut().enumerate() {
                            *d = src[x + 2 * kx];
                        }
                    }
                }
            }
            let mut out = conv_forward(p.conv2_weights.data(), p.conv2_bias.data(), &col, f2, w2);
            relu_inplace(&mut out);
            out
        })
        .collect();
    drop(p1);
    let mut c2 = vec![0.0f32; f2 * h2 * w2];
    for (y, row) in conv2_rows.iter().enumerate() {
        for c in 0..f2 {
            c2[(c * h2 + y) * w2..(c * h2 + y + 1) * w2].copy_from_slice(&row[c * w2..(c + 1) * w2]);
        }
    }
    drop(conv2_rows);
    let (q2, hq, wq) = dilated_max(&c2, f2, h2, w2, 2);
    drop(c2);

    let g = a.pool2_size();
    let flat = a.flattened_dim();
    let hidden_units = a.fc_units;
    let ow = p.out_weights.data();
    let ob = p.out_bias.data();
    rows.par_iter()
        .flat_map_iter(|&y| {
            let ly = y - y0;
            let mut x_mat = vec![0.0f32; flat * cols.len()];
            for c in 0..f2 {
                let plane = &q2[c * hq * wq..(c + 1) * hq * wq];
                for i in 0..g {
                    let src = &plane[(ly + 4 * i) * wq..(ly + 4 * i + 1) * wq];
                    for j in 0..g {
                        let idx = (c * g + i) * g + j;
                        let dst = &mut x_mat[idx * cols.len()..(idx + 1) * cols.len()];
                        for (d, &cx) in dst.iter_mut().zip(cols) {
                            *d = src[cx + 4 * j];
                        }
                    }
                }
            }
            let n = cols.len();
            let mut hidden = Vec::with_capacity(hidden_units * n);
            for &b in p.fc_bias.data() {
                hidden.extend(std::iter::repeat_n(b, n));
            }
            gemm(
                MatRef::new(p.fc_weights.data(), hidden_units, flat),
                MatRef::new(&x_mat, flat, n),
                1.0,
                &mut hidden,
            );
            relu_inplace(&mut hidden);
            (0..n)
                .map(|k| {
                    let mut logits = [ob[0], ob[1]];
                    for (cls, logit) in logits.iter_mut().enumerate() {
                        for h in 0..hidden_units {
                            *logit += ow[cls * hidden_units + h] * hidden[h * n + k];
                        }
                    }
                    softmax2(logits)[1]
                })
                .collect::<Vec<f32>>()
        })
        .collect()
}
