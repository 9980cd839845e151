//! Stochastic view-pair augmentation in two orders.
//!
//! Image Augmentation (IA): featurize the window once, then apply two
//! independent image augmentations (random crop + resize, Gaussian blur).
//! Audio Augmentation (AA): apply two independent waveform augmentations
//! (pitch shift, room reverberation), then featurize each view.
//!
//! All operations take an explicit RNG; per-sample streams are derived
//! from (seed, epoch, sample, view) so augmentation is order-independent.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // trait paths used by the no_std build
use num_traits::Float;

use crate::error::{Error, Result};
use crate::features::{self, FeatureParams, MelSpectrogram, SparseFilterbank, SpectrogramImage};
use crate::fft;
use crate::rng::Rng;
use crate::segment::Window;

/// Augmentation order: image-first or audio-first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    Ia,
    Aa,
}

/// How the two image methods combine per view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IaCompose {
    /// Crop then blur on every view (SimCLR-style composition).
    Both,
    /// One of the two methods per view, chosen at random.
    OneOf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub mode: AugmentMode,
    /// Crop area as a fraction of the full image.
    pub crop_scale_range: (f64, f64),
    /// Crop aspect ratio (width / height).
    pub crop_aspect_range: (f64, f64),
    pub blur_sigma_range: (f64, f64),
    pub pitch_semitone_range: (f64, f64),
    pub reverb_rt60_range: (f64, f64),
    pub reverb_wet_mix: f64,
    pub ia_compose: IaCompose,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            mode: AugmentMode::Aa,
            crop_scale_range: (0.6, 0.9),
            crop_aspect_range: (0.75, 4.0 / 3.0),
            blur_sigma_range: (0.5, 1.5),
            pitch_semitone_range: (-2.0, 2.0),
            reverb_rt60_range: (0.1, 0.4),
            reverb_wet_mix: 0.5,
            ia_compose: IaCompose::Both,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("crop_scale", self.crop_scale_range),
            ("crop_aspect", self.crop_aspect_range),
            ("blur_sigma", self.blur_sigma_range),
            ("pitch_semitones", self.pitch_semitone_range),
            ("reverb_rt60", self.reverb_rt60_range),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo <= hi) {
                return Err(Error::InvalidInput(format!("{name} range is empty: [{lo}, {hi}]")));
            }
        }
        if !(self.crop_scale_range.0 > 0.0 && self.crop_scale_range.1 <= 1.0) {
            return Err(Error::InvalidInput("crop fractions must lie in (0, 1]".into()));
        }
        if self.reverb_rt60_range.0 <= 0.0 {
            return Err(Error::InvalidInput("rt60 must be positive".into()));
        }
        if self.blur_sigma_range.0 <= 0.0 {
            return Err(Error::InvalidInput("blur sigma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.reverb_wet_mix) {
            return Err(Error::InvalidInput("wet mix must lie in [0, 1]".into()));
        }
        if self.pitch_semitone_range.0.abs() > 12.0 || self.pitch_semitone_range.1.abs() > 12.0 {
            return Err(Error::InvalidInput("pitch shift limited to one octave".into()));
        }
        Ok(())
    }
}

/// Two stochastic views of one window.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewPair {
    Spectrograms(MelSpectrogram, MelSpectrogram),
    Images(SpectrogramImage, SpectrogramImage),
}

/// Crop a random sub-rectangle (area fraction and aspect drawn from the
/// given ranges) and bilinearly resize it back to the original size.
pub fn random_crop_resize(
    image: &SpectrogramImage,
    scale_range: (f64, f64),
    aspect_range: (f64, f64),
    rng: &mut Rng,
) -> SpectrogramImage {
    let (h, w) = (image.height, image.width);
    debug_assert!(h >= 8 && w >= 8, "crop expects at least an 8x8 image");
    let area = (h * w) as f64;

    let mut rect = None;
    for _ in 0..10 {
        let frac = rng.uniform_in(scale_range.0, scale_range.1);
        let aspect = rng.uniform_in(aspect_range.0, aspect_range.1);
        let target = area * frac;
        let cw = (target * aspect).sqrt().round() as usize;
        let ch = (target / aspect).sqrt().round() as usize;
        if (1..=w).contains(&cw) && (1..=h).contains(&ch) {
            let x0 = rng.below(w - cw + 1);
            let y0 = rng.below(h - ch + 1);
            rect = Some((x0, y0, cw, ch));
            break;
        }
    }
    // Fallback: centered crop at the mean scale, original aspect.
    let (x0, y0, cw, ch) = rect.unwrap_or_else(|| {
        let frac = 0.5 * (scale_range.0 + scale_range.1);
        let side = frac.sqrt();
        let cw = ((w as f64 * side).round() as usize).clamp(1, w);
        let ch = ((h as f64 * side).round() as usize).clamp(1, h);
        ((w - cw) / 2, (h - ch) / 2, cw, ch)
    });

    // Bilinear resize of the crop back to w x h (half-pixel centers).
    let mut pixels = vec![0u8; h * w * 3];
    let sx = cw as f64 / w as f64;
    let sy = ch as f64 / h as f64;
    for y in 0..h {
        let src_y = ((y as f64 + 0.5) * sy - 0.5).max(0.0).min(ch as f64 - 1.0);
        let y_lo = src_y.floor() as usize;
        let y_hi = (y_lo + 1).min(ch - 1);
        let fy = src_y - y_lo as f64;
        for x in 0..w {
            let src_x = ((x as f64 + 0.5) * sx - 0.5).max(0.0).min(cw as f64 - 1.0);
            let x_lo = src_x.floor() as usize;
            let x_hi = (x_lo + 1).min(cw - 1);
            let fx = src_x - x_lo as f64;
            for c in 0..3 {
                let sample = |yy: usize, xx: usize| -> f64 {
                    image.pixels[((y0 + yy) * w + x0 + xx) * 3 + c] as f64
                };
                let top = sample(y_lo, x_lo) * (1.0 - fx) + sample(y_lo, x_hi) * fx;
                let bot = sample(y_hi, x_lo) * (1.0 - fx) + sample(y_hi, x_hi) * fx;
                let v = top * (1.0 - fy) + bot * fy;
                pixels[(y * w + x) * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    SpectrogramImage { pixels, height: h, width: w, colormap_id: image.colormap_id.clone() }
}

/// Separable Gaussian blur with kernel radius ceil(3*sigma) and clamped
/// edges; each channel is filtered independently and rounded once.
pub fn gaussian_blur(image: &SpectrogramImage, sigma: f64) -> SpectrogramImage {
    debug_assert!(sigma > 0.0);
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= norm;
    }

    let (h, w) = (image.height, image.width);
    let clamp = |v: isize, n: usize| v.max(0).min(n as isize - 1) as usize;

    // Horizontal pass into f64, then vertical pass, then round.
    let mut mid = vec![0.0f64; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0f64;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sx = clamp(x as isize + ki as isize - radius, w);
                    acc += kv * image.pixels[(y * w + sx) * 3 + c] as f64;
                }
                mid[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    let mut pixels = vec![0u8; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0f64;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sy = clamp(y as isize + ki as isize - radius, h);
                    acc += kv * mid[(sy * w + x) * 3 + c];
                }
                pixels[(y * w + x) * 3 + c] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    SpectrogramImage { pixels, height: h, width: w, colormap_id: image.colormap_id.clone() }
}

/// Shift pitch by `semitones` via linear-interpolation resampling, then
/// restore the original length (center truncation / trailing zero pad).
pub fn pitch_shift(samples: &[f32], semitones: f64) -> Result<Vec<f32>> {
    if semitones.abs() > 12.0 {
        return Err(Error::InvalidInput(format!("pitch shift {semitones} exceeds one octave")));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let len = samples.len();
    // Read step 2^(s/12) compresses the waveform for s > 0, multiplying
    // every frequency by the same factor.
    let step = (semitones / 12.0).exp2();
    let out_len = ((len - 1) as f64 / step).floor() as usize + 1;
    let mut resampled = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * step;
        let idx = pos.floor() as usize;
        let frac = pos - idx as f64;
        let a = samples[idx.min(len - 1)] as f64;
        let b = samples[(idx + 1).min(len - 1)] as f64;
        resampled.push((a + (b - a) * frac) as f32);
    }
    // Back to the original length.
    if resampled.len() >= len {
        let offset = (resampled.len() - len) / 2;
        Ok(resampled[offset..offset + len].to_vec())
    } else {
        resampled.resize(len, 0.0);
        Ok(resampled)
    }
}

/// Convolve with a synthetic exponentially-decaying noise impulse
/// response, mix with the dry signal, and renormalize to the input peak.
pub fn room_reverb(samples: &[f32], sample_rate: u32, rt60: f64, wet_mix: f64, rng: &mut Rng) -> Result<Vec<f32>> {
    if rt60 <= 0.0 {
        return Err(Error::InvalidInput("rt60 must be positive".into()));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    // Silence stays exactly silent; skip the convolution but keep the
    // RNG consumption identical so downstream draws do not shift.
    let peak_in = samples.iter().fold(0.0f64, |acc, &v| acc.max((v as f64).abs()));
    if peak_in == 0.0 {
        let ir_len = ((rt60 * sample_rate as f64).round() as usize).max(1);
        for _ in 1..ir_len {
            let _ = rng.gaussian();
        }
        return Ok(samples.to_vec());
    }
    let ir_len = ((rt60 * sample_rate as f64).round() as usize).max(1);
    // Amplitude decays by 60 dB (1e-3) over rt60: exp(-ln(1000) * n / L).
    let decay = -(1000.0f64).ln() / (rt60 * sample_rate as f64);
    let mut ir = Vec::with_capacity(ir_len);
    ir.push(1.0f64);
    for n in 1..ir_len {
        ir.push(rng.gaussian() * (decay * n as f64).exp());
    }

    let dry: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
    let wet_full = fft::convolve(&dry, &ir);
    let mut out: Vec<f64> = (0..samples.len())
        .map(|i| (1.0 - wet_mix) * dry[i] + wet_mix * wet_full[i])
        .collect();

    let peak_out = out.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if peak_in > 0.0 && peak_out > 0.0 {
        let scale = peak_in / peak_out;
        for v in out.iter_mut() {
            *v *= scale;
        }
    }
    Ok(out.iter().map(|&v| v as f32).collect())
}

/// Derived per-view RNG: hash(seed, epoch, sample_index, view_index).
pub fn view_rng(seed: u64, epoch: u64, sample_index: u64, view_index: u64) -> Rng {
    Rng::new(crate::rng::derive_seed(&[seed, epoch, sample_index, view_index]))
}

/// Produce one stochastic view of a window under the configured mode.
pub fn make_view(
    window: &Window,
    config: &AugmentConfig,
    params: &FeatureParams,
    fb: &SparseFilterbank,
    colormap: &[[u8; 3]],
    rng: &mut Rng,
) -> Result<ViewKind> {
    match config.mode {
        AugmentMode::Aa => {
            let s = rng.uniform_in(config.pitch_semitone_range.0, config.pitch_semitone_range.1);
            let shifted = pitch_shift(&window.samples, s)?;
            let rt60 = rng.uniform_in(config.reverb_rt60_range.0, config.reverb_rt60_range.1);
            let wet = room_reverb(&shifted, window.sample_rate, rt60, config.reverb_wet_mix, rng)?;
            let spec = features::log_mel_with(&wet, window.sample_rate, params, fb)?;
            Ok(ViewKind::Spectrogram(spec))
        }
        AugmentMode::Ia => {
            let spec = features::log_mel_with(&window.samples, window.sample_rate, params, fb)?;
            let image = features::render_image(&spec, colormap)?;
            Ok(ViewKind::Image(augment_image(&image, config, rng)))
        }
    }
}

/// One already-rendered image view (IA mode), reusable when the base
/// featurization is cached.
pub fn augment_image(image: &SpectrogramImage, config: &AugmentConfig, rng: &mut Rng) -> SpectrogramImage {
    match config.ia_compose {
        IaCompose::Both => {
            let cropped =
                random_crop_resize(image, config.crop_scale_range, config.crop_aspect_range, rng);
            let sigma = rng.uniform_in(config.blur_sigma_range.0, config.blur_sigma_range.1);
            gaussian_blur(&cropped, sigma)
        }
        IaCompose::OneOf => {
            if rng.below(2) == 0 {
                random_crop_resize(image, config.crop_scale_range, config.crop_aspect_range, rng)
            } else {
                let sigma = rng.uniform_in(config.blur_sigma_range.0, config.blur_sigma_range.1);
                gaussian_blur(image, sigma)
            }
        }
    }
}

/// A single augmented view.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewKind {
    Spectrogram(MelSpectrogram),
    Image(SpectrogramImage),
}

/// Two independent views of the same window. The RNGs for the two views
/// must come from distinct derived seeds.
pub fn make_view_pair(
    window: &Window,
    config: &AugmentConfig,
    params: &FeatureParams,
    fb: &SparseFilterbank,
    colormap: &[[u8; 3]],
    rng_a: &mut Rng,
    rng_b: &mut Rng,
) -> Result<ViewPair> {
    match config.mode {
        AugmentMode::Aa => {
            let a = match make_view(window, config, params, fb, colormap, rng_a)? {
                ViewKind::Spectrogram(s) => s,
                ViewKind::Image(_) => unreachable!(),
            };
            let b = match make_view(window, config, params, fb, colormap, rng_b)? {
                ViewKind::Spectrogram(s) => s,
                ViewKind::Image(_) => unreachable!(),
            };
            Ok(ViewPair::Spectrograms(a, b))
        }
        AugmentMode::Ia => {
            let spec = features::log_mel_with(&window.samples, window.sample_rate, params, fb)?;
            let image = features::render_image(&spec, colormap)?;
            let a = augment_image(&image, config, rng_a);
            let b = augment_image(&image, config, rng_b);
            Ok(ViewPair::Images(a, b))
        }
    }
}
