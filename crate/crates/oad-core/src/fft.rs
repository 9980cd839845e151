//! Minimal radix-2 FFT and FFT-based convolution.
//!
//! Everything runs in f64; the DFT oracle used by the tests is a direct
//! O(n^2) sum, independent of the iterative transform here.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // trait paths used by the no_std build
use num_traits::Float;

/// In-place iterative radix-2 Cooley-Tukey. `re`/`im` length must be a
/// power of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    if n <= 1 {
        return;
    }

    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    // Per-stage twiddle tables keep the butterfly loop free of serial
    // dependencies (the incremental-rotation alternative defeats SIMD).
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut tw_re = vec![0.0f64; n / 2];
    let mut tw_im = vec![0.0f64; n / 2];
    let mut len = 2usize;
    while len <= n {
        let half = len / 2;
        let angle = sign * 2.0 * core::f64::consts::PI / len as f64;
        let (w_im, w_re) = angle.sin_cos();
        tw_re[0] = 1.0;
        tw_im[0] = 0.0;
        for k in 1..half {
            tw_re[k] = tw_re[k - 1] * w_re - tw_im[k - 1] * w_im;
            tw_im[k] = tw_re[k - 1] * w_im + tw_im[k - 1] * w_re;
        }
        let mut start = 0usize;
        while start < n {
            for k in 0..half {
                let a = start + k;
                let b = a + half;
                let t_re = re[b] * tw_re[k] - im[b] * tw_im[k];
                let t_im = re[b] * tw_im[k] + im[b] * tw_re[k];
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
            }
            start += len;
        }
        len <<= 1;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in re.iter_mut() {
            *v *= scale;
        }
        for v in im.iter_mut() {
            *v *= scale;
        }
    }
}

/// Magnitudes of the one-sided spectrum (bins 0..=n/2) of a real frame
/// whose length is a power of two.
pub fn real_fft_magnitudes(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let mut re = frame.to_vec();
    let mut im = vec![0.0f64; n];
    fft_in_place(&mut re, &mut im, false);
    (0..=n / 2)
        .map(|k| (re[k] * re[k] + im[k] * im[k]).sqrt())
        .collect()
}

/// One-sided magnitudes of two real frames from a single complex FFT
/// (a packed as the real part, b as the imaginary part).
pub fn real_fft_magnitudes_pair(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    let mut re = a.to_vec();
    let mut im = b.to_vec();
    fft_in_place(&mut re, &mut im, false);
    let mut mag_a = Vec::with_capacity(n / 2 + 1);
    let mut mag_b = Vec::with_capacity(n / 2 + 1);
    for k in 0..=n / 2 {
        let kc = (n - k) % n;
        // A_k = (Z_k + conj(Z_{n-k})) / 2, B_k = (Z_k - conj(Z_{n-k})) / 2i
        let ar = 0.5 * (re[k] + re[kc]);
        let ai = 0.5 * (im[k] - im[kc]);
        let br = 0.5 * (im[k] + im[kc]);
        let bi = 0.5 * (re[kc] - re[k]);
        mag_a.push((ar * ar + ai * ai).sqrt());
        mag_b.push((br * br + bi * bi).sqrt());
    }
    (mag_a, mag_b)
}

/// Linear convolution of two real signals via one zero-padded FFT
/// (x packed as the real part, h as the imaginary part).
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut re = vec![0.0f64; n];
    let mut im = vec![0.0f64; n];
    re[..x.len()].copy_from_slice(x);
    im[..h.len()].copy_from_slice(h);
    fft_in_place(&mut re, &mut im, false);
    // Separate X and H from the packed spectrum and multiply, in place.
    // Both inputs are real, so Y(n-k) = conj(Y(k)): one pass over
    // conjugate pairs covers the whole spectrum.
    let separate = |zr: f64, zi: f64, zcr: f64, zci: f64| -> (f64, f64) {
        let xr = 0.5 * (zr + zcr);
        let xi = 0.5 * (zi - zci);
        let hr = 0.5 * (zi + zci);
        let hi = 0.5 * (zcr - zr);
        (xr * hr - xi * hi, xr * hi + xi * hr)
    };
    let (y0r, y0i) = separate(re[0], im[0], re[0], im[0]);
    re[0] = y0r;
    im[0] = y0i;
    if n > 1 {
        let mid = n / 2;
        let (ymr, ymi) = separate(re[mid], im[mid], re[mid], im[mid]);
        re[mid] = ymr;
        im[mid] = ymi;
        for k in 1..mid {
            let kc = n - k;
            let (yr, yi) = separate(re[k], im[k], re[kc], im[kc]);
            re[k] = yr;
            im[k] = yi;
            re[kc] = yr;
            im[kc] = -yi;
        }
    }
    fft_in_place(&mut re, &mut im, true);
    re.truncate(out_len);
    re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Direct O(n^2) DFT magnitude oracle.
    fn dft_magnitudes(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                let mut re = 0.0f64;
                let mut im = 0.0f64;
                for (t, &x) in frame.iter().enumerate() {
                    let angle = -2.0 * core::f64::consts::PI * (k * t) as f64 / n as f64;
                    re += x * angle.cos();
                    im += x * angle.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn matches_direct_dft() {
        let mut rng = Rng::new(21);
        for &n in &[8usize, 64, 256] {
            let frame: Vec<f64> = (0..n).map(|_| rng.uniform() * 2.0 - 1.0).collect();
            let fast = real_fft_magnitudes(&frame);
            let slow = dft_magnitudes(&frame);
            let peak = slow.iter().cloned().fold(0.0, f64::max);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() <= 1e-9 * peak.max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn packed_pair_matches_single_transforms() {
        let mut rng = Rng::new(5);
        for &n in &[16usize, 128] {
            let a: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
            let (ma, mb) = real_fft_magnitudes_pair(&a, &b);
            let ra = real_fft_magnitudes(&a);
            let rb = real_fft_magnitudes(&b);
            for (x, y) in ma.iter().zip(&ra) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
            for (x, y) in mb.iter().zip(&rb) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = Rng::new(4);
        let n = 128;
        let orig: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let mut re = orig.clone();
        let mut im = vec![0.0; n];
        fft_in_place(&mut re, &mut im, false);
        fft_in_place(&mut re, &mut im, true);
        for (a, b) in re.iter().zip(orig.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn convolve_matches_direct() {
        let mut rng = Rng::new(17);
        let x: Vec<f64> = (0..50).map(|_| rng.gaussian()).collect();
        let h: Vec<f64> = (0..13).map(|_| rng.gaussian()).collect();
        let fast = convolve(&x, &h);
        let mut slow = vec![0.0f64; x.len() + h.len() - 1];
        for (i, &xv) in x.iter().enumerate() {
            for (j, &hv) in h.iter().enumerate() {
                slow[i + j] += xv * hv;
            }
        }
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn convolve_with_delta_is_identity() {
        let x = [1.0, -2.0, 3.0, 0.5];
        let out = convolve(&x, &[1.0]);
        for (a, b) in out.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
