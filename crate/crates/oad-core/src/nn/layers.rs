//! Per-sample layer primitives with exact backward passes.
//!
//! All functions operate on flat row-major buffers with explicit channel
//! and spatial dimensions; dot products and weight gradients accumulate
//! in f64 regardless of the storage type.

use alloc::vec;
use alloc::vec::Vec;

use super::{f, t, Scalar};

/// For output row y and kernel row ky, the valid output-column span
/// [x0, x1) and the matching input row start, or None when the source
/// row falls outside the map.
#[inline]
fn tap_span(y: usize, ky: usize, kx: usize, h: usize, w: usize) -> Option<(usize, usize, usize)> {
    let sy = y as isize + ky as isize - 1;
    if sy < 0 || sy >= h as isize {
        return None;
    }
    // Output columns where 0 <= x + kx - 1 < w.
    let x0 = 1usize.saturating_sub(kx);
    let x1 = (w + 1 - kx).min(w);
    Some((sy as usize, x0, x1))
}

/// 3x3 convolution, stride 1, zero padding 1. Input c_in x h x w,
/// weight c_out x c_in x 3 x 3, output c_out x h x w. Loops run tap-major
/// over contiguous rows; accumulation is f64 in a fixed order.
pub fn conv3x3_forward<T: Scalar>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    c_out: usize,
) -> Vec<T> {
    debug_assert_eq!(input.len(), c_in * h * w);
    debug_assert_eq!(weight.len(), c_out * c_in * 9);
    debug_assert_eq!(bias.len(), c_out);
    let mut out = vec![T::zero(); c_out * h * w];
    let mut acc = vec![0.0f64; h * w];
    for co in 0..c_out {
        acc.fill(f(bias[co]));
        for ci in 0..c_in {
            let in_base = ci * h * w;
            let w_base = (co * c_in + ci) * 9;
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let wv = f(weight[w_base + ky * 3 + kx]);
                    if wv == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let Some((sy, x0, x1)) = tap_span(y, ky, kx, h, w) else { continue };
                        let in_row = &input[in_base + sy * w..in_base + (sy + 1) * w];
                        let acc_row = &mut acc[y * w + x0..y * w + x1];
                        let src = &in_row[x0 + kx - 1..x1 + kx - 1];
                        for (slot, &v) in acc_row.iter_mut().zip(src) {
                            *slot += wv * f(v);
                        }
                    }
                }
            }
        }
        for (slot, &v) in out[co * h * w..(co + 1) * h * w].iter_mut().zip(&acc) {
            *slot = t(v);
        }
    }
    out
}

/// Backward of [`conv3x3_forward`]; returns (grad_input, grad_weight, grad_bias).
pub fn conv3x3_backward<T: Scalar>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[T],
    c_out: usize,
    grad_out: &[T],
) -> (Vec<T>, Vec<f64>, Vec<f64>) {
    let mut grad_in = vec![0.0f64; c_in * h * w];
    let mut grad_w = vec![0.0f64; c_out * c_in * 9];
    let mut grad_b = vec![0.0f64; c_out];
    for co in 0..c_out {
        let go_base = co * h * w;
        for &g in &grad_out[go_base..go_base + h * w] {
            grad_b[co] += f(g);
        }
        for ci in 0..c_in {
            let in_base = ci * h * w;
            let w_base = (co * c_in + ci) * 9;
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let wv = f(weight[w_base + ky * 3 + kx]);
                    let mut wg = 0.0f64;
                    for y in 0..h {
                        let Some((sy, x0, x1)) = tap_span(y, ky, kx, h, w) else { continue };
                        let go_row = &grad_out[go_base + y * w + x0..go_base + y * w + x1];
                        let in_row = &input[in_base + sy * w + x0 + kx - 1..in_base + sy * w + x1 + kx - 1];
                        let gi_row =
                            &mut grad_in[in_base + sy * w + x0 + kx - 1..in_base + sy * w + x1 + kx - 1];
                        for ((&g, &v), gi) in go_row.iter().zip(in_row).zip(gi_row) {
                            let g = f(g);
                            wg += g * f(v);
                            *gi += g * wv;
                        }
                    }
                    grad_w[w_base + ky * 3 + kx] = wg;
                }
            }
        }
    }
    (grad_in.iter().map(|&g| t(g)).collect(), grad_w, grad_b)
}

pub fn relu_forward<T: Scalar>(input: &[T]) -> Vec<T> {
    input.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// Backward through ReLU given the pre-activation input.
pub fn relu_backward<T: Scalar>(input: &[T], grad_out: &[T]) -> Vec<T> {
    input
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect()
}

/// 2x2 max pool, stride 2. Trailing odd rows/columns are dropped.
/// Returns the pooled map and, per output cell, the flat input index that
/// won (ties go to the first candidate in row-major order).
pub fn maxpool2_forward<T: Scalar>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<T>, Vec<u32>, usize, usize) {
    let ho = h / 2;
    let wo = w / 2;
    let mut out = vec![T::zero(); c * ho * wo];
    let mut argmax = vec![0u32; c * ho * wo];
    for ch in 0..c {
        for y in 0..ho {
            for x in 0..wo {
                let mut best_idx = (ch * h + 2 * y) * w + 2 * x;
                let mut best = input[best_idx];
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                let o = (ch * ho + y) * wo + x;
                out[o] = best;
                argmax[o] = best_idx as u32;
            }
        }
    }
    (out, argmax, ho, wo)
}

/// Routes each output gradient to exactly the winning input position.
pub fn maxpool2_backward<T: Scalar>(
    argmax: &[u32],
    grad_out: &[T],
    input_len: usize,
) -> Vec<T> {
    let mut grad_in = vec![T::zero(); input_len];
    for (slot, &g) in argmax.iter().zip(grad_out) {
        let i = *slot as usize;
        grad_in[i] = grad_in[i] + g;
    }
    grad_in
}

/// Global average pool: per-channel arithmetic mean over h x w.
pub fn gap_forward<T: Scalar>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = (h * w) as f64;
    (0..c)
        .map(|ch| {
            let mut acc = 0.0f64;
            for &v in &input[ch * h * w..(ch + 1) * h * w] {
                acc += f(v);
            }
            t(acc / hw)
        })
        .collect()
}

pub fn gap_backward<T: Scalar>(grad_out: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = (h * w) as f64;
    let mut grad_in = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let g = t::<T>(f(grad_out[ch]) / hw);
        for slot in &mut grad_in[ch * h * w..(ch + 1) * h * w] {
            *slot = g;
        }
    }
    grad_in
}

/// Fully connected: y = W x + b with W of shape d_out x d_in.
pub fn linear_forward<T: Scalar>(input: &[T], weight: &[T], bias: &[T], d_out: usize) -> Vec<T> {
    let d_in = input.len();
    debug_assert_eq!(weight.len(), d_out * d_in);
    (0..d_out)
        .map(|o| {
            let mut acc = f(bias[o]);
            for (i, &x) in input.iter().enumerate() {
                acc += f(weight[o * d_in + i]) * f(x);
            }
            t(acc)
        })
        .collect()
}

/// Backward of [`linear_forward`]; returns (grad_input, grad_weight, grad_bias).
pub fn linear_backward<T: Scalar>(
    input: &[T],
    weight: &[T],
    d_out: usize,
    grad_out: &[T],
) -> (Vec<T>, Vec<f64>, Vec<f64>) {
    let d_in = input.len();
    let mut grad_in = vec![0.0f64; d_in];
    let mut grad_w = vec![0.0f64; d_out * d_in];
    let mut grad_b = vec![0.0f64; d_out];
    for o in 0..d_out {
        let go = f(grad_out[o]);
        grad_b[o] += go;
        for i in 0..d_in {
            grad_w[o * d_in + i] += go * f(input[i]);
            grad_in[i] += go * f(weight[o * d_in + i]);
        }
    }
    (grad_in.iter().map(|&g| t(g)).collect(), grad_w, grad_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn conv_zero_input_gives_bias() {
        let input = vec![0.0f64; 2 * 4 * 4];
        let weight = vec![0.5f64; 3 * 2 * 9];
        let bias = vec![0.25f64, -1.0, 0.0];
        let out = conv3x3_forward(&input, 2, 4, 4, &weight, &bias, 3);
        for co in 0..3 {
            for i in 0..16 {
                assert_eq!(out[co * 16 + i], bias[co]);
            }
        }
    }

    #[test]
    fn maxpool_tie_routes_to_first_in_row_major() {
        // All-equal block: gradient must land on the top-left cell.
        let input = vec![1.0f32; 1 * 2 * 2];
        let (out, argmax, ho, wo) = maxpool2_forward(&input, 1, 2, 2);
        assert_eq!((ho, wo), (1, 1));
        assert_eq!(out, vec![1.0]);
        assert_eq!(argmax, vec![0]);
        let grad_in = maxpool2_backward::<f32>(&argmax, &[2.5], 4);
        assert_eq!(grad_in, vec![2.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_drops_odd_edges() {
        let input: Vec<f32> = (0..1 * 5 * 3).map(|i| i as f32).collect();
        let (_, _, ho, wo) = maxpool2_forward(&input, 1, 5, 3);
        assert_eq!((ho, wo), (2, 1));
    }

    #[test]
    fn gap_is_mean_with_uniform_gradient() {
        let input = vec![1.0f64, 2.0, 3.0, 4.0, 10.0, 10.0, 10.0, 10.0];
        let out = gap_forward(&input, 2, 2, 2);
        assert_eq!(out, vec![2.5, 10.0]);
        let grad = gap_backward(&[1.0f64, 0.0], 2, 2, 2);
        assert_eq!(&grad[..4], &[0.25, 0.25, 0.25, 0.25]);
        assert_eq!(&grad[4..], &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_bias_gradient_is_grad_out() {
        let input = vec![0.3f64, -0.2];
        let weight = vec![1.0f64, 2.0, -1.0, 0.5];
        let (_, _, grad_b) = linear_backward(&input, &weight, 2, &[1.0, 1.0]);
        assert_eq!(grad_b, vec![1.0, 1.0]);
    }

    /// Central finite differences on a scalar loss sum(c * output).
    fn check_fd<F>(dim: usize, analytic: &[f64], loss: F, eps: f64, tol: f64)
    where
        F: Fn(&[f64]) -> f64,
    {
        // `loss` closes over a base point; callers pass perturbations.
        let mut fd = vec![0.0f64; dim];
        for i in 0..dim {
            let mut delta = vec![0.0; dim];
            delta[i] = eps;
            let plus = loss(&delta);
            delta[i] = -eps;
            let minus = loss(&delta);
            fd[i] = (plus - minus) / (2.0 * eps);
        }
        let scale = fd.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-8);
        for i in 0..dim {
            let err = (analytic[i] - fd[i]).abs() / scale;
            assert!(err < tol, "coord {i}: analytic {} fd {}", analytic[i], fd[i]);
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = Rng::new(91);
        let (c_in, h, w, c_out) = (2usize, 5usize, 4usize, 3usize);
        let input: Vec<f64> = (0..c_in * h * w).map(|_| rng.gaussian()).collect();
        let weight: Vec<f64> = (0..c_out * c_in * 9).map(|_| rng.gaussian() * 0.5).collect();
        let bias: Vec<f64> = (0..c_out).map(|_| rng.gaussian() * 0.1).collect();
        let c: Vec<f64> = (0..c_out * h * w).map(|_| rng.gaussian()).collect();

        let (grad_in, grad_w, grad_b) =
            conv3x3_backward(&input, c_in, h, w, &weight, c_out, &c);

        let loss_at = |inp: &[f64], wt: &[f64], b: &[f64]| -> f64 {
            conv3x3_forward(inp, c_in, h, w, wt, b, c_out)
                .iter()
                .zip(&c)
                .map(|(a, b)| a * b)
                .sum()
        };
        let eps = 1e-6;
        check_fd(
            input.len(),
            &grad_in,
            |d| {
                let p: Vec<f64> = input.iter().zip(d).map(|(a, b)| a + b).collect();
                loss_at(&p, &weight, &bias)
            },
            eps,
            1e-7,
        );
        check_fd(
            weight.len(),
            &grad_w,
            |d| {
                let p: Vec<f64> = weight.iter().zip(d).map(|(a, b)| a + b).collect();
                loss_at(&input, &p, &bias)
            },
            eps,
            1e-7,
        );
        check_fd(
            bias.len(),
            &grad_b,
            |d| {
                let p: Vec<f64> = bias.iter().zip(d).map(|(a, b)| a + b).collect();
                loss_at(&input, &weight, &p)
            },
            eps,
            1e-7,
        );
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = Rng::new(17);
        let (d_in, d_out) = (6usize, 4usize);
        let input: Vec<f64> = (0..d_in).map(|_| rng.gaussian()).collect();
        let weight: Vec<f64> = (0..d_out * d_in).map(|_| rng.gaussian()).collect();
        let bias: Vec<f64> = (0..d_out).map(|_| rng.gaussian()).collect();
        let c: Vec<f64> = (0..d_out).map(|_| rng.gaussian()).collect();
        let (grad_in, grad_w, _) = linear_backward(&input, &weight, d_out, &c);
        let loss_at = |inp: &[f64], wt: &[f64]| -> f64 {
            linear_forward(inp, wt, &bias, d_out).iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        check_fd(
            d_in,
            &grad_in,
            |d| {
                let p: Vec<f64> = input.iter().zip(d).map(|(a, b)| a + b).collect();
                loss_at(&p, &weight)
            },
            1e-6,
            1e-8,
        );
        check_fd(
            weight.len(),
            &grad_w,
            |d| {
                let p: Vec<f64> = weight.iter().zip(d).map(|(a, b)| a + b).collect();
                loss_at(&input, &p)
            },
            1e-6,
            1e-8,
        );
    }
}
