//! Log-Mel spectrogram features and their rendered-image form.
//!
//! The chain is STFT magnitude -> power -> HTK Mel filterbank -> dB with
//! per-window peak normalization (peak at 0 dB, floor at -80 dB). Rendered
//! images map dB linearly onto a fixed 256-entry colormap; windows whose
//! mean RGB value falls below a threshold carry too little information and
//! are filtered out.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // trait paths used by the no_std build
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fft;
use crate::segment::Window;

pub const DB_FLOOR: f64 = -80.0;

/// Row-major f64 matrix used for spectra and filterbanks.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// STFT / Mel parameters. Defaults target 0.5 s windows at 44100 Hz,
/// giving a 64 x 44 feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureParams {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams { n_fft: 2048, hop: 512, n_mels: 64, fmin: 0.0, fmax: 22_050.0 }
    }
}

impl FeatureParams {
    pub fn n_frames(&self, window_len: usize) -> usize {
        1 + window_len / self.hop
    }
}

/// Log-power Mel features in dB, peak-normalized per window.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    /// n_mels x n_frames, row-major, values in [-80, 0].
    pub values: Vec<f32>,
    pub n_mels: usize,
    pub n_frames: usize,
    pub sample_rate: u32,
}

impl MelSpectrogram {
    #[inline]
    pub fn at(&self, mel: usize, frame: usize) -> f32 {
        self.values[mel * self.n_frames + frame]
    }

    /// Values rescaled from [-80, 0] dB to [0, 1] for the encoder.
    pub fn to_unit_values(&self) -> Vec<f32> {
        self.values.iter().map(|v| (v - DB_FLOOR as f32) / (-DB_FLOOR) as f32).collect()
    }
}

/// RGB rendering of a spectrogram; row 0 of the Mel matrix sits at the
/// bottom of the image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpectrogramImage {
    /// height x width x 3, row-major from the top of the image.
    pub pixels: Vec<u8>,
    pub height: usize,
    pub width: usize,
    pub colormap_id: String,
}

impl SpectrogramImage {
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Channel-major floats in [0, 1] (3 x H x W) for the encoder.
    pub fn to_unit_values(&self) -> Vec<f32> {
        let hw = self.height * self.width;
        let mut out = vec![0.0f32; 3 * hw];
        for i in 0..hw {
            for c in 0..3 {
                out[c * hw + i] = self.pixels[i * 3 + c] as f32 / 255.0;
            }
        }
        out
    }
}

/// Periodic Hann window of length n.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * core::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reflected sample lookup for center-aligned framing; bounces at both
/// ends so any pad length is well-defined.
#[inline]
fn reflect_at(samples: &[f32], idx: isize) -> f64 {
    let n = samples.len() as isize;
    if n == 1 {
        return samples[0] as f64;
    }
    let mut i = idx;
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    samples[i as usize] as f64
}

/// STFT magnitude matrix ((n_fft/2 + 1) x n_frames) of a window, with the
/// input reflection-padded by n_fft/2 on both sides (center alignment)
/// and n_frames = 1 + floor(len / hop).
pub fn stft_magnitude(samples: &[f32], params: &FeatureParams) -> Result<Mat> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("stft of an empty window".into()));
    }
    if !params.n_fft.is_power_of_two() {
        return Err(Error::InvalidInput(format!("n_fft {} is not a power of two", params.n_fft)));
    }
    let n_fft = params.n_fft;
    let pad = (n_fft / 2) as isize;
    let n_frames = params.n_frames(samples.len());
    let window = hann(n_fft);
    let n_bins = n_fft / 2 + 1;
    let mut out = Mat::zeros(n_bins, n_frames);
    let fill = |frame: &mut [f64], f: usize| {
        let start = f as isize * params.hop as isize - pad;
        for (i, slot) in frame.iter_mut().enumerate() {
            *slot = reflect_at(samples, start + i as isize) * window[i];
        }
    };
    // Two frames per complex transform (packed real FFT).
    let mut frame_a = vec![0.0f64; n_fft];
    let mut frame_b = vec![0.0f64; n_fft];
    let mut f = 0usize;
    while f + 1 < n_frames {
        fill(&mut frame_a, f);
        fill(&mut frame_b, f + 1);
        let (mags_a, mags_b) = fft::real_fft_magnitudes_pair(&frame_a, &frame_b);
        for (k, (&ma, &mb)) in mags_a.iter().zip(&mags_b).enumerate() {
            out.set(k, f, ma);
            out.set(k, f + 1, mb);
        }
        f += 2;
    }
    if f < n_frames {
        fill(&mut frame_a, f);
        let mags = fft::real_fft_magnitudes(&frame_a);
        for (k, &m) in mags.iter().enumerate() {
            out.set(k, f, m);
        }
    }
    Ok(out)
}

/// HTK Mel scale: m = 2595 * log10(1 + f / 700).
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10.0f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular Mel filterbank (n_mels x (n_fft/2 + 1)); peaks are equally
/// spaced on the HTK Mel scale with amplitude 1 (no area normalization).
pub fn mel_filterbank(sample_rate: u32, params: &FeatureParams) -> Result<Mat> {
    let n_bins = params.n_fft / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    if !(params.fmin < params.fmax && params.fmax <= nyquist) {
        return Err(Error::InvalidInput(format!(
            "need fmin < fmax <= {} Hz (got fmin {}, fmax {})",
            nyquist, params.fmin, params.fmax
        )));
    }
    let mel_lo = hz_to_mel(params.fmin);
    let mel_hi = hz_to_mel(params.fmax);
    let n_points = params.n_mels + 2;
    let centers_hz: Vec<f64> = (0..n_points)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_points - 1) as f64))
        .collect();

    let mut fb = Mat::zeros(params.n_mels, n_bins);
    for m in 0..params.n_mels {
        let (left, center, right) = (centers_hz[m], centers_hz[m + 1], centers_hz[m + 2]);
        let mut row_sum = 0.0f64;
        for k in 0..n_bins {
            let freq = k as f64 * sample_rate as f64 / params.n_fft as f64;
            let rising = (freq - left) / (center - left);
            let falling = (right - freq) / (right - center);
            let w = rising.min(falling).max(0.0);
            fb.set(m, k, w);
            row_sum += w;
        }
        if row_sum <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "mel filter {m} has no support; n_mels {} too large for n_fft {}",
                params.n_mels, params.n_fft
            )));
        }
    }
    Ok(fb)
}

/// Compact filterbank row: first nonzero bin plus the nonzero weights.
/// The Mel product touches ~3% of the bins, so this matters in training.
#[derive(Debug, Clone)]
pub struct SparseFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

impl SparseFilterbank {
    pub fn from_dense(fb: &Mat) -> Self {
        let rows = (0..fb.rows)
            .map(|m| {
                let row = fb.row(m);
                let first = row.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = row.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                (first, row[first..=last].to_vec())
            })
            .collect();
        SparseFilterbank { n_mels: fb.rows, n_bins: fb.cols, rows }
    }

    /// mel_power[m] = sum_k fb[m][k] * power[k]
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (m, (start, weights)) in self.rows.iter().enumerate() {
            let mut acc = 0.0f64;
            for (w, p) in weights.iter().zip(&power[*start..]) {
                acc += w * p;
            }
            out[m] = acc;
        }
    }
}

/// Full Log-Mel pipeline for one window: power spectrogram, filterbank
/// product, then dB relative to the window peak, clamped to [-80, 0].
/// An all-zero window maps to -80 dB everywhere by convention.
pub fn log_mel(window: &Window, params: &FeatureParams) -> Result<MelSpectrogram> {
    let fb = mel_filterbank(window.sample_rate, params)?;
    let sparse = SparseFilterbank::from_dense(&fb);
    log_mel_with(&window.samples, window.sample_rate, params, &sparse)
}

/// Same as [`log_mel`] but reusing a prebuilt filterbank.
pub fn log_mel_with(
    samples: &[f32],
    sample_rate: u32,
    params: &FeatureParams,
    fb: &SparseFilterbank,
) -> Result<MelSpectrogram> {
    let stft = stft_magnitude(samples, params)?;
    let n_frames = stft.cols;
    let n_bins = stft.rows;
    let mut mel_power = vec![0.0f64; params.n_mels * n_frames];
    let mut power_col = vec![0.0f64; n_bins];
    let mut col_out = vec![0.0f64; params.n_mels];
    for f in 0..n_frames {
        for k in 0..n_bins {
            let m = stft.at(k, f);
            power_col[k] = m * m;
        }
        fb.apply(&power_col, &mut col_out);
        for m in 0..params.n_mels {
            mel_power[m * n_frames + f] = col_out[m];
        }
    }

    let peak = mel_power.iter().cloned().fold(0.0f64, f64::max);
    let values: Vec<f32> = if peak <= 0.0 {
        vec![DB_FLOOR as f32; mel_power.len()]
    } else {
        mel_power
            .iter()
            .map(|&p| {
                let db = if p <= 0.0 { DB_FLOOR } else { 10.0 * (p / peak).log10() };
                db.max(DB_FLOOR).min(0.0) as f32
            })
            .collect()
    };
    Ok(MelSpectrogram { values, n_mels: params.n_mels, n_frames, sample_rate })
}

/// The colormap shipped with this crate: a 256-entry dark-to-bright ramp
/// interpolated from ten anchor colors.
pub const COLORMAP_ID: &str = "oad-ramp-v1";

const RAMP_ANCHORS: [[u8; 3]; 10] = [
    [68, 1, 84],
    [72, 40, 120],
    [62, 74, 137],
    [49, 104, 142],
    [38, 130, 142],
    [31, 158, 137],
    [53, 183, 121],
    [109, 205, 89],
    [180, 222, 44],
    [253, 231, 37],
];

/// Build the 256 x 3 lookup table.
pub fn default_colormap() -> Vec<[u8; 3]> {
    let mut table = Vec::with_capacity(256);
    let segments = RAMP_ANCHORS.len() - 1;
    for i in 0..256usize {
        let t = i as f64 / 255.0 * segments as f64;
        let seg = (t.floor() as usize).min(segments - 1);
        let frac = t - seg as f64;
        let a = RAMP_ANCHORS[seg];
        let b = RAMP_ANCHORS[seg + 1];
        let mut rgb = [0u8; 3];
        for c in 0..3 {
            rgb[c] = (a[c] as f64 + (b[c] as f64 - a[c] as f64) * frac).round() as u8;
        }
        table.push(rgb);
    }
    table
}

/// Map dB values onto the colormap: index = round((v + 80) / 80 * 255).
/// Row 0 of the spectrogram (lowest Mel band) lands at the image bottom.
pub fn render_image(spec: &MelSpectrogram, colormap: &[[u8; 3]]) -> Result<SpectrogramImage> {
    if colormap.len() != 256 {
        return Err(Error::InvalidInput(format!(
            "colormap must have 256 entries, got {}",
            colormap.len()
        )));
    }
    let height = spec.n_mels;
    let width = spec.n_frames;
    let mut pixels = vec![0u8; height * width * 3];
    for mel in 0..height {
        let y = height - 1 - mel;
        for x in 0..width {
            let v = spec.at(mel, x) as f64;
            let idx = ((v - DB_FLOOR) / -DB_FLOOR * 255.0).round().max(0.0).min(255.0) as usize;
            let rgb = colormap[idx];
            let o = (y * width + x) * 3;
            pixels[o..o + 3].copy_from_slice(&rgb);
        }
    }
    Ok(SpectrogramImage {
        pixels,
        height,
        width,
        colormap_id: String::from(COLORMAP_ID),
    })
}

/// Arithmetic mean over all H*W*3 channel bytes.
pub fn mean_rgb(image: &SpectrogramImage) -> f64 {
    let mut acc = 0.0f64;
    for &b in &image.pixels {
        acc += b as f64;
    }
    acc / image.pixels.len() as f64
}

/// Partition images into (kept, dropped) by mean RGB; an image is kept iff
/// its mean is >= threshold (the cut-off is inclusive). Order preserved.
pub fn filter_low_info(
    images: Vec<SpectrogramImage>,
    threshold: f64,
) -> (Vec<SpectrogramImage>, Vec<SpectrogramImage>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for img in images {
        if mean_rgb(&img) >= threshold {
            kept.push(img);
        } else {
            dropped.push(img);
        }
    }
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::string::ToString;

    fn window(samples: Vec<f32>) -> Window {
        Window {
            samples,
            sample_rate: 44_100,
            source_ref: ("t".to_string(), 0),
            class_label: None,
            user_id: None,
        }
    }

    fn sine(freq: f64, n: usize, amp: f32) -> Vec<f32> {
        (0..n)
            .map(|i| amp * (2.0 * core::f64::consts::PI * freq * i as f64 / 44_100.0).sin() as f32)
            .collect()
    }

    /// Direct DFT + Hann oracle for one centered frame.
    fn dft_frame_oracle(samples: &[f32], params: &FeatureParams, frame_idx: usize) -> Vec<f64> {
        let n_fft = params.n_fft;
        let pad = (n_fft / 2) as isize;
        let win = hann(n_fft);
        let start = frame_idx as isize * params.hop as isize - pad;
        let frame: Vec<f64> = (0..n_fft)
            .map(|i| reflect_at(samples, start + i as isize) * win[i])
            .collect();
        (0..=n_fft / 2)
            .map(|k| {
                let mut re = 0.0f64;
                let mut im = 0.0f64;
                for (t, &x) in frame.iter().enumerate() {
                    let angle = -2.0 * core::f64::consts::PI * (k * t) as f64 / n_fft as f64;
                    re += x * angle.cos();
                    im += x * angle.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn stft_zero_window_is_zero() {
        let out = stft_magnitude(&vec![0.0; 22_050], &FeatureParams::default()).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stft_frame_count() {
        let out = stft_magnitude(&vec![0.1; 22_050], &FeatureParams::default()).unwrap();
        assert_eq!(out.cols, 44);
        assert_eq!(out.rows, 1025);
    }

    #[test]
    fn stft_sine_peaks_at_expected_bin() {
        // Bin k=100: f = 44100 * 100 / 2048 Hz.
        let k = 100usize;
        let freq = 44_100.0 * k as f64 / 2048.0;
        let params = FeatureParams::default();
        let out = stft_magnitude(&sine(freq, 22_050, 0.8), &params).unwrap();
        for f in [10usize, 20, 30] {
            let mut best = 0usize;
            let mut best_v = -1.0;
            for bin in 0..out.rows {
                if out.at(bin, f) > best_v {
                    best_v = out.at(bin, f);
                    best = bin;
                }
            }
            assert_eq!(best, k, "frame {f}");
        }
    }

    #[test]
    fn stft_matches_dft_oracle() {
        let mut rng = Rng::new(31);
        let params = FeatureParams::default();
        let samples: Vec<f32> = (0..22_050).map(|_| (rng.uniform() * 2.0 - 1.0) as f32).collect();
        let out = stft_magnitude(&samples, &params).unwrap();
        let peak = out.data.iter().cloned().fold(0.0, f64::max);
        for &f in &[0usize, 7, 43] {
            let oracle = dft_frame_oracle(&samples, &params, f);
            for (k, &expect) in oracle.iter().enumerate() {
                let got = out.at(k, f);
                assert!(
                    (got - expect).abs() <= 1e-6 * peak.max(expect),
                    "bin {k} frame {f}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn filterbank_rows_positive_and_centers_monotone() {
        let params = FeatureParams::default();
        let fb = mel_filterbank(44_100, &params).unwrap();
        let mel_lo = hz_to_mel(params.fmin);
        let mel_hi = hz_to_mel(params.fmax);
        let mut prev_center = -1.0f64;
        for m in 0..fb.rows {
            let row = fb.row(m);
            assert!(row.iter().sum::<f64>() > 0.0);
            assert!(row.iter().all(|&w| w >= 0.0));
            // Peak bin should sit near the closed-form Mel center.
            let center_hz =
                mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) as f64 / (params.n_mels + 1) as f64);
            let peak_bin = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let peak_hz = peak_bin as f64 * 44_100.0 / params.n_fft as f64;
            let bin_width = 44_100.0 / params.n_fft as f64;
            assert!(
                (peak_hz - center_hz).abs() <= bin_width,
                "filter {m}: peak {peak_hz} vs center {center_hz}"
            );
            assert!(center_hz > prev_center);
            prev_center = center_hz;
        }
    }

    #[test]
    fn filterbank_covers_all_interior_bins() {
        let params = FeatureParams::default();
        let fb = mel_filterbank(44_100, &params).unwrap();
        for k in 0..fb.cols {
            let freq = k as f64 * 44_100.0 / params.n_fft as f64;
            if freq > params.fmin && freq < params.fmax {
                let covered = (0..fb.rows).any(|m| fb.at(m, k) > 0.0);
                assert!(covered, "bin {k} at {freq} Hz uncovered");
            }
        }
    }

    #[test]
    fn filterbank_rejects_bad_ranges() {
        let mut p = FeatureParams::default();
        p.fmax = 30_000.0;
        assert!(mel_filterbank(44_100, &p).is_err());
        let mut p = FeatureParams::default();
        p.n_mels = 1024; // far beyond FFT resolution near fmin
        assert!(mel_filterbank(44_100, &p).is_err());
    }

    #[test]
    fn log_mel_zero_window_is_floor() {
        let spec = log_mel(&window(vec![0.0; 22_050]), &FeatureParams::default()).unwrap();
        assert!(spec.values.iter().all(|&v| v == DB_FLOOR as f32));
    }

    #[test]
    fn log_mel_peak_is_zero_db() {
        let spec = log_mel(&window(sine(1200.0, 22_050, 0.5)), &FeatureParams::default()).unwrap();
        let max = spec.values.iter().cloned().fold(f32::MIN, f32::max);
        assert_eq!(max, 0.0);
        assert!(spec.values.iter().all(|&v| (DB_FLOOR as f32..=0.0).contains(&v)));
    }

    #[test]
    fn log_mel_scale_invariant() {
        let params = FeatureParams::default();
        let base = sine(900.0, 22_050, 0.2);
        let a = log_mel(&window(base.clone()), &params).unwrap();
        let b = log_mel(&window(base.iter().map(|s| s * 4.0).collect()), &params).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert!((x - y).abs() < 1e-4, "{x} vs {y}");
        }
    }

    #[test]
    fn log_mel_energy_lands_in_expected_band() {
        let params = FeatureParams::default();
        let spec = log_mel(&window(sine(1200.0, 22_050, 0.7)), &params).unwrap();
        // Busiest Mel row (max mean dB) should be the row whose filter
        // covers 1200 Hz.
        let fb = mel_filterbank(44_100, &params).unwrap();
        let target_bin = (1200.0 * params.n_fft as f64 / 44_100.0).round() as usize;
        let expect_row = (0..fb.rows)
            .max_by(|&a, &b| fb.at(a, target_bin).partial_cmp(&fb.at(b, target_bin)).unwrap())
            .unwrap();
        let busiest = (0..spec.n_mels)
            .max_by(|&a, &b| {
                let mean_a: f32 = (0..spec.n_frames).map(|f| spec.at(a, f)).sum();
                let mean_b: f32 = (0..spec.n_frames).map(|f| spec.at(b, f)).sum();
                mean_a.partial_cmp(&mean_b).unwrap()
            })
            .unwrap();
        assert!(
            busiest.abs_diff(expect_row) <= 1,
            "busiest {busiest} vs expected {expect_row}"
        );
    }

    #[test]
    fn render_extremes_hit_table_ends() {
        let cmap = default_colormap();
        let spec = MelSpectrogram {
            values: vec![DB_FLOOR as f32; 8 * 4],
            n_mels: 8,
            n_frames: 4,
            sample_rate: 44_100,
        };
        let img = render_image(&spec, &cmap).unwrap();
        assert!(img.pixels.chunks(3).all(|p| p == cmap[0]));

        let spec0 = MelSpectrogram { values: vec![0.0; 8 * 4], ..spec };
        let img = render_image(&spec0, &cmap).unwrap();
        assert!(img.pixels.chunks(3).all(|p| p == cmap[255]));
    }

    #[test]
    fn render_minus_forty_db_maps_to_128() {
        let cmap = default_colormap();
        let spec = MelSpectrogram {
            values: vec![-40.0; 4],
            n_mels: 2,
            n_frames: 2,
            sample_rate: 44_100,
        };
        let img = render_image(&spec, &cmap).unwrap();
        assert_eq!(img.pixel(0, 0), cmap[128]);
    }

    #[test]
    fn render_puts_low_mel_rows_at_bottom() {
        let cmap = default_colormap();
        let mut values = vec![DB_FLOOR as f32; 3 * 2];
        values[0] = 0.0; // mel row 0, frame 0
        let spec = MelSpectrogram { values, n_mels: 3, n_frames: 2, sample_rate: 44_100 };
        let img = render_image(&spec, &cmap).unwrap();
        assert_eq!(img.pixel(2, 0), cmap[255]); // bottom row of the image
        assert_eq!(img.pixel(0, 0), cmap[0]);
    }

    #[test]
    fn render_is_deterministic() {
        let params = FeatureParams::default();
        let cmap = default_colormap();
        let w = window(sine(700.0, 22_050, 0.4));
        let a = render_image(&log_mel(&w, &params).unwrap(), &cmap).unwrap();
        let b = render_image(&log_mel(&w, &params).unwrap(), &cmap).unwrap();
        assert_eq!(a.pixels, b.pixels);
    }

    fn flat_image(value: u8, n: usize) -> SpectrogramImage {
        SpectrogramImage {
            pixels: vec![value; n * 3],
            height: 1,
            width: n,
            colormap_id: COLORMAP_ID.to_string(),
        }
    }

    #[test]
    fn mean_rgb_extremes_and_linearity() {
        assert_eq!(mean_rgb(&flat_image(0, 10)), 0.0);
        assert_eq!(mean_rgb(&flat_image(255, 10)), 255.0);
        let mut half = flat_image(0, 10);
        half.pixels[15..].fill(255);
        assert_eq!(mean_rgb(&half), 127.5);
        for c in [3u8, 77, 200] {
            assert_eq!(mean_rgb(&flat_image(c, 7)), c as f64);
        }
    }

    #[test]
    fn filter_low_info_boundary_inclusive() {
        let images = vec![flat_image(0, 4), flat_image(255, 4), flat_image(70, 4)];
        let (kept, dropped) = filter_low_info(images, 70.0);
        assert_eq!(kept.len(), 2);
        assert_eq!(dropped.len(), 1);
        assert_eq!(kept[0].pixels[0], 255);
        assert_eq!(kept[1].pixels[0], 70); // exactly at threshold: kept
        assert_eq!(dropped[0].pixels[0], 0);
    }

    #[test]
    fn filter_partitions_without_loss() {
        let mut rng = Rng::new(8);
        let images: Vec<SpectrogramImage> =
            (0..30).map(|_| flat_image(rng.below(256) as u8, 5)).collect();
        let total = images.len();
        let (kept, dropped) = filter_low_info(images, 70.0);
        assert_eq!(kept.len() + dropped.len(), total);
        assert!(kept.iter().all(|i| mean_rgb(i) >= 70.0));
        assert!(dropped.iter().all(|i| mean_rgb(i) < 70.0));
    }

    #[test]
    fn colormap_monotone_brightness() {
        let cmap = default_colormap();
        let mean = |rgb: [u8; 3]| (rgb[0] as f64 + rgb[1] as f64 + rgb[2] as f64) / 3.0;
        assert!(mean(cmap[0]) < 70.0);
        assert!(mean(cmap[255]) > 70.0);
        // No strict monotonicity claim, but the ramp must trend upward.
        assert!(mean(cmap[200]) > mean(cmap[40]));
    }
}
