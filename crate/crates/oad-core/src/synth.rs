//! Synthetic labeled datasets.
//!
//! Cough-like burst clips and breath-like continuous noise with
//! class-dependent spectral centers, plus labeled embedding clouds on the
//! unit sphere. Separability, not realism, is the design goal: every
//! pipeline stage and acceptance check can run without any external
//! dataset.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // trait paths used by the no_std build
use num_traits::Float;

use crate::error::{Error, Result};
use crate::eval::{Manifest, ManifestRow};
use crate::rng::{derive_seed, Rng};
use crate::segment::{AudioClip, ClassLabel};

#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    /// One or two short bursts with attack/decay envelopes (coughs).
    Bursts,
    /// Slowly amplitude-modulated continuous noise (breathing).
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthClassSpec {
    pub label: ClassLabel,
    pub n_users: usize,
    pub instances_per_user: usize,
    /// Carrier band center and width (Hz).
    pub f_center: f64,
    pub bandwidth: f64,
    /// Optional tonal component amplitude relative to the band noise.
    pub tonal: f64,
    /// Burst attack/decay times (seconds); ignored for Continuous.
    pub attack: f64,
    pub decay: f64,
    /// Amplitude-modulation rate in Hz (0 = none); gives a rattle-like
    /// temporal texture.
    pub am_rate: f64,
    /// Signal-to-background ratio in dB.
    pub snr_db: f64,
    pub kind: SignalKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: Vec<SynthClassSpec>,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        // Classes differ in both spectral center and texture (bandwidth,
        // tonality, envelope): a conv encoder with global pooling keys on
        // texture more readily than on absolute band position.
        let burst = |label: ClassLabel,
                     f_center: f64,
                     bandwidth: f64,
                     tonal: f64,
                     attack: f64,
                     decay: f64| SynthClassSpec {
            label,
            n_users: 4,
            instances_per_user: 6,
            f_center,
            bandwidth,
            tonal,
            attack,
            decay,
            am_rate: 0.0,
            snr_db: 30.0,
            kind: SignalKind::Bursts,
        };
        SynthSpec {
            classes: vec![
                burst(ClassLabel::Healthy, 1200.0, 300.0, 0.5, 0.01, 0.10),
                burst(ClassLabel::Flu, 2000.0, 120.0, 0.9, 0.04, 0.16),
                // The novel classes sit outside the known texture range:
                // CC is a wideband rattle (fast amplitude modulation that
                // neither known class has), CB is the only fully
                // continuous signal.
                {
                    let mut cc = burst(ClassLabel::Cc, 3000.0, 1200.0, 0.0, 0.005, 0.12);
                    cc.am_rate = 28.0;
                    cc.snr_db = 24.0; // brighter floor keeps sparse clicks above the RGB cut
                    cc
                },
                SynthClassSpec {
                    label: ClassLabel::Cb,
                    n_users: 4,
                    instances_per_user: 6,
                    f_center: 500.0,
                    bandwidth: 150.0,
                    tonal: 0.5,
                    attack: 0.0,
                    decay: 0.0,
                    am_rate: 0.0,
                    snr_db: 30.0,
                    kind: SignalKind::Continuous,
                },
            ],
            sample_rate: 44_100,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidInput("synth spec has no classes".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidInput("synth sample_rate must be positive".into()));
        }
        for (i, a) in self.classes.iter().enumerate() {
            if a.n_users == 0 || a.instances_per_user == 0 {
                return Err(Error::InvalidInput(format!(
                    "class {} needs users and instances",
                    a.label.as_str()
                )));
            }
            if a.f_center <= 0.0 || a.f_center >= self.sample_rate as f64 / 2.0 {
                return Err(Error::InvalidInput(format!(
                    "class {} center {} Hz outside (0, Nyquist)",
                    a.label.as_str(),
                    a.f_center
                )));
            }
            for b in &self.classes[i + 1..] {
                if (a.f_center - b.f_center).abs() < 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "classes {} and {} share a spectral center",
                        a.label.as_str(),
                        b.label.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One generated recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub id: String,
    pub clip: AudioClip,
    pub class: ClassLabel,
    pub user_id: String,
}

/// Band noise as a sum of random-phase sinusoids inside the band.
fn band_noise(rng: &mut Rng, n: usize, sr: f64, f_center: f64, bandwidth: f64) -> Vec<f64> {
    let n_components = 24usize;
    let mut freqs = Vec::with_capacity(n_components);
    let mut phases = Vec::with_capacity(n_components);
    for _ in 0..n_components {
        freqs.push(rng.uniform_in(f_center - bandwidth / 2.0, f_center + bandwidth / 2.0).max(1.0));
        phases.push(rng.uniform() * core::f64::consts::TAU);
    }
    let scale = 1.0 / (n_components as f64).sqrt();
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            freqs
                .iter()
                .zip(&phases)
                .map(|(&f, &p)| (core::f64::consts::TAU * f * t + p).sin())
                .sum::<f64>()
                * scale
        })
        .collect()
}

fn burst_envelope(n: usize, sr: f64, attack: f64, decay: f64) -> Vec<f64> {
    let attack_n = (attack * sr).max(1.0);
    let decay_rate = 1.0 / (decay * sr).max(1.0);
    (0..n)
        .map(|i| {
            if (i as f64) < attack_n {
                i as f64 / attack_n
            } else {
                (-(i as f64 - attack_n) * decay_rate).exp()
            }
        })
        .collect()
}

/// Generate the full labeled dataset. Pure given the spec; writing WAVs
/// and the manifest CSV is the caller's concern.
pub fn synth_dataset(spec: &SynthSpec) -> Result<(Vec<SynthClip>, Manifest)> {
    spec.validate()?;
    let sr = spec.sample_rate as f64;
    let mut clips = Vec::new();
    let mut manifest = Manifest::default();
    for (ci, class) in spec.classes.iter().enumerate() {
        for user in 0..class.n_users {
            let mut user_rng =
                Rng::new(derive_seed(&[spec.seed, ci as u64, user as u64, u64::from(b'u')]));
            // Per-user voice: gain and spectral jitter, stable across
            // that user's instances.
            let user_gain = user_rng.uniform_in(0.55, 0.95);
            let user_pitch = user_rng.uniform_in(0.94, 1.06);
            for inst in 0..class.instances_per_user {
                let mut rng = Rng::new(derive_seed(&[
                    spec.seed,
                    ci as u64,
                    user as u64,
                    inst as u64,
                    u64::from(b'i'),
                ]));
                let f_center = class.f_center * user_pitch * rng.uniform_in(0.98, 1.02);
                // Burst clips carry 2-3 events; breath clips stay short
                // so the window counts per class come out comparable.
                let clip_secs = match class.kind {
                    SignalKind::Bursts => rng.uniform_in(1.6, 2.4),
                    SignalKind::Continuous => rng.uniform_in(1.0, 1.6),
                };
                let n = (clip_secs * sr) as usize;
                let mut signal = vec![0.0f64; n];

                match class.kind {
                    SignalKind::Bursts => {
                        let n_bursts = 2 + rng.below(2);
                        let burst_len = ((class.attack + 4.0 * class.decay) * sr) as usize;
                        for b in 0..n_bursts {
                            // Keep bursts inside the clip and apart.
                            let lane = n / n_bursts;
                            let start = b * lane
                                + rng.below((lane.saturating_sub(burst_len)).max(1));
                            let env = burst_envelope(
                                burst_len.min(n - start),
                                sr,
                                class.attack,
                                class.decay,
                            );
                            let carrier = band_noise(
                                &mut rng,
                                env.len(),
                                sr,
                                f_center,
                                class.bandwidth,
                            );
                            let tone_phase = rng.uniform() * core::f64::consts::TAU;
                            let am_phase = rng.uniform() * core::f64::consts::TAU;
                            for (k, (&e, &c)) in env.iter().zip(&carrier).enumerate() {
                                let t = k as f64 / sr;
                                let tone = class.tonal
                                    * (core::f64::consts::TAU * f_center * t + tone_phase).sin();
                                let am = if class.am_rate > 0.0 {
                                    let u = (core::f64::consts::TAU * class.am_rate * t
                                        + am_phase)
                                        .sin();
                                    (0.5 + 0.5 * u) * (0.5 + 0.5 * u)
                                } else {
                                    1.0
                                };
                                signal[start + k] += e * am * (c + tone);
                            }
                        }
                    }
                    SignalKind::Continuous => {
                        let carrier = band_noise(&mut rng, n, sr, f_center, class.bandwidth);
                        let mod_rate = rng.uniform_in(0.3, 0.6);
                        let mod_phase = rng.uniform() * core::f64::consts::TAU;
                        for (k, &c) in carrier.iter().enumerate() {
                            let t = k as f64 / sr;
                            let breath =
                                0.65 + 0.35 * (core::f64::consts::TAU * mod_rate * t + mod_phase).sin();
                            signal[k] = c * breath;
                        }
                    }
                }

                // Background noise at the configured SNR (relative to the
                // signal's active power).
                let sig_power = signal.iter().map(|v| v * v).sum::<f64>() / n as f64;
                if sig_power > 0.0 {
                    let noise_power = sig_power / 10.0f64.powf(class.snr_db / 10.0);
                    let noise_amp = noise_power.sqrt();
                    for slot in signal.iter_mut() {
                        *slot += rng.gaussian() * noise_amp;
                    }
                }

                // Normalize to a per-user peak, never clipping.
                let peak = signal.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
                let target = 0.7 * user_gain;
                if peak > 0.0 {
                    let scale = target / peak;
                    for slot in signal.iter_mut() {
                        *slot *= scale;
                    }
                }

                let id = format!("{}-u{:02}-i{:03}", class.label.as_str(), user, inst);
                let samples: Vec<f32> = signal.iter().map(|&v| v as f32).collect();
                clips.push(SynthClip {
                    id: id.clone(),
                    clip: AudioClip::new(samples, spec.sample_rate)?,
                    class: class.label.clone(),
                    user_id: format!("{}-user{:02}", class.label.as_str(), user),
                });
                manifest.rows.push(ManifestRow {
                    path: format!("{id}.wav"),
                    class: class.label.clone(),
                    user_id: format!("{}-user{:02}", class.label.as_str(), user),
                    split: None,
                });
            }
        }
    }
    Ok((clips, manifest))
}

/// Mutually orthogonal unit means (requires dim >= n_classes).
pub fn orthogonal_means(n_classes: usize, dim: usize) -> Result<Vec<Vec<f32>>> {
    if dim < n_classes {
        return Err(Error::InvalidInput(format!(
            "dim {dim} cannot hold {n_classes} orthogonal means"
        )));
    }
    Ok((0..n_classes)
        .map(|c| {
            let mut v = vec![0.0f32; dim];
            v[c] = 1.0;
            v
        })
        .collect())
}

/// Labeled embedding cloud: samples = normalize(mean + sigma * gaussian).
/// Means must be unit-norm with pairwise angles of at least 60 degrees.
pub fn synth_embeddings(
    means: &[Vec<f32>],
    n_per_class: usize,
    sigma: f64,
    seed: u64,
) -> Result<(Vec<Vec<f32>>, Vec<usize>)> {
    if means.is_empty() {
        return Err(Error::InvalidInput("no class means".into()));
    }
    let dim = means[0].len();
    for (i, m) in means.iter().enumerate() {
        if m.len() != dim {
            return Err(Error::ShapeMismatch("means have mixed dimensions".into()));
        }
        let norm = m.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-5 {
            return Err(Error::InvalidInput(format!("mean {i} is not unit-norm ({norm})")));
        }
        for (j, other) in means.iter().enumerate().skip(i + 1) {
            let dot: f64 = m.iter().zip(other).map(|(&a, &b)| a as f64 * b as f64).sum();
            if dot > 0.5 + 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "means {i} and {j} are closer than 60 degrees (cos {dot})"
                )));
            }
        }
    }
    let mut rng = Rng::new(seed);
    let mut vectors = Vec::with_capacity(means.len() * n_per_class);
    let mut truth = Vec::with_capacity(means.len() * n_per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            let mut v: Vec<f64> =
                mean.iter().map(|&m| m as f64 + rng.gaussian() * sigma).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for x in v.iter_mut() {
                    *x /= norm;
                }
            }
            vectors.push(v.iter().map(|&x| x as f32).collect());
            truth.push(c);
        }
    }
    Ok((vectors, truth))
}
