//! Cough event segmentation.
//!
//! Detects cough-like events in a recording by relative-to-peak RMS
//! thresholding, groups consecutive events into episodes (gap of at most
//! two seconds), and standardizes event audio into fixed 0.5 s windows.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // trait paths used by the no_std build
use num_traits::Float;

use crate::error::{Error, Result};

/// Mono audio at a known sample rate. Samples are amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio clip contains NaN/Inf".into()));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Half-open sample range [start, end) of one detected event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventBoundary {
    pub start_sample: usize,
    pub end_sample: usize,
}

impl EventBoundary {
    pub fn len(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Consecutive events separated by no more than the episode gap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub events: Vec<EventBoundary>,
}

/// Class of a discovery instance, or a free-form pre-training class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Healthy,
    Flu,
    Cc,
    Cb,
    Pretrain(String),
}

impl ClassLabel {
    /// Healthy and Flu are the designated known classes; CC and CB are
    /// the designated unknown (novel) classes.
    pub fn is_known(&self) -> bool {
        matches!(self, ClassLabel::Healthy | ClassLabel::Flu)
    }

    pub fn parse(s: &str) -> ClassLabel {
        match s {
            "healthy" => ClassLabel::Healthy,
            "flu" => ClassLabel::Flu,
            "cc" => ClassLabel::Cc,
            "cb" => ClassLabel::Cb,
            other => ClassLabel::Pretrain(String::from(other)),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            ClassLabel::Healthy => "healthy",
            ClassLabel::Flu => "flu",
            ClassLabel::Cc => "cc",
            ClassLabel::Cb => "cb",
            ClassLabel::Pretrain(name) => name,
        }
    }
}

/// A fixed-length 0.5 s audio window ready for featurization.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    /// (clip id, start sample within the source clip)
    pub source_ref: (String, usize),
    pub class_label: Option<ClassLabel>,
    pub user_id: Option<String>,
}

/// Segmentation parameters; every value can be overridden from the run
/// config.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentParams {
    /// Active-frame threshold as a fraction of the peak RMS.
    pub rel_threshold: f64,
    /// Events shorter than this are discarded (seconds).
    pub min_event_dur: f64,
    /// Events closer than this are merged (seconds).
    pub intra_merge_gap: f64,
    /// RMS frame length (seconds).
    pub frame_len: f64,
    /// RMS hop (seconds).
    pub hop: f64,
    /// Episode grouping gap (seconds).
    pub episode_gap: f64,
    /// Standard window length (seconds).
    pub window_len: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            rel_threshold: 0.1,
            min_event_dur: 0.05,
            intra_merge_gap: 0.2,
            frame_len: 0.020,
            hop: 0.010,
            episode_gap: 2.0,
            window_len: 0.5,
        }
    }
}

/// Number of samples in a standard window: round(window_len * sample_rate).
pub fn window_samples(sample_rate: u32, window_len: f64) -> usize {
    (window_len * sample_rate as f64).round() as usize
}

/// Per-frame RMS over tiling frames; the final partial frame is dropped.
pub fn frame_energy(clip: &AudioClip, frame_len: f64, hop: f64) -> Result<Vec<f64>> {
    let frame = (frame_len * clip.sample_rate as f64).round() as usize;
    let step = (hop * clip.sample_rate as f64).round() as usize;
    if frame == 0 || step == 0 {
        return Err(Error::InvalidInput("frame and hop must span >= 1 sample".into()));
    }
    if clip.samples.len() < frame {
        return Err(Error::InvalidInput(format!(
            "clip of {} samples is shorter than one {frame}-sample frame",
            clip.samples.len()
        )));
    }
    let n_frames = (clip.samples.len() - frame) / step + 1;
    let mut rms = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let start = i * step;
        let mut acc = 0.0f64;
        for &s in &clip.samples[start..start + frame] {
            acc += (s as f64) * (s as f64);
        }
        rms.push((acc / frame as f64).sqrt());
    }
    Ok(rms)
}

/// Energy-threshold event extraction: frames with RMS above
/// `rel_threshold * max(RMS)` are active; runs of active frames become
/// events, nearby events merge, and short events are dropped.
pub fn extract_events(clip: &AudioClip, params: &SegmentParams) -> Result<Vec<EventBoundary>> {
    if clip.samples.is_empty() {
        return Err(Error::InvalidInput("cannot extract events from an empty clip".into()));
    }
    let frame = (params.frame_len * clip.sample_rate as f64).round() as usize;
    let step = (params.hop * clip.sample_rate as f64).round() as usize;
    if clip.samples.len() < frame {
        // Shorter than one frame: treat the whole clip as silent.
        return Ok(Vec::new());
    }
    let rms = frame_energy(clip, params.frame_len, params.hop)?;
    let peak = rms.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Ok(Vec::new());
    }
    let threshold = params.rel_threshold * peak;

    // Maximal runs of active frames, in frame indices [start, end).
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, &value) in rms.iter().enumerate() {
        if value > threshold {
            if run_start.is_none() {
                run_start = Some(i);
            }
        } else if let Some(start) = run_start.take() {
            runs.push((start, i));
        }
    }
    if let Some(start) = run_start {
        runs.push((start, rms.len()));
    }

    // Convert to sample ranges; a run of frames [a, b) covers samples
    // [a*step, (b-1)*step + frame).
    let clip_len = clip.samples.len();
    let mut events: Vec<EventBoundary> = runs
        .into_iter()
        .map(|(a, b)| EventBoundary {
            start_sample: a * step,
            end_sample: ((b - 1) * step + frame).min(clip_len),
        })
        .collect();

    // Merge events separated by less than the merge gap.
    let merge_gap = (params.intra_merge_gap * clip.sample_rate as f64).round() as usize;
    let mut merged: Vec<EventBoundary> = Vec::new();
    for event in events.drain(..) {
        match merged.last_mut() {
            Some(prev) if event.start_sample.saturating_sub(prev.end_sample) < merge_gap => {
                prev.end_sample = event.end_sample;
            }
            _ => merged.push(event),
        }
    }

    // Drop events shorter than the minimum duration.
    let min_len = (params.min_event_dur * clip.sample_rate as f64).round() as usize;
    merged.retain(|e| e.len() >= min_len);
    Ok(merged)
}

/// Group sorted, non-overlapping events into episodes: consecutive events
/// with an inter-event silence of at most `max_gap` seconds share one.
pub fn group_episodes(
    events: &[EventBoundary],
    sample_rate: u32,
    max_gap: f64,
) -> Result<Vec<Episode>> {
    for pair in events.windows(2) {
        if pair[1].start_sample < pair[0].end_sample {
            return Err(Error::InvalidInput(
                "events must be sorted and non-overlapping".into(),
            ));
        }
    }
    for e in events {
        if e.start_sample >= e.end_sample {
            return Err(Error::InvalidInput("empty event boundary".into()));
        }
    }
    let gap_samples = max_gap * sample_rate as f64;
    let mut episodes: Vec<Episode> = Vec::new();
    for &event in events {
        match episodes.last_mut() {
            Some(ep) => {
                let prev_end = ep.events.last().unwrap().end_sample;
                let gap = (event.start_sample - prev_end) as f64;
                if gap <= gap_samples {
                    ep.events.push(event);
                } else {
                    episodes.push(Episode { events: vec![event] });
                }
            }
            None => episodes.push(Episode { events: vec![event] }),
        }
    }
    Ok(episodes)
}

/// Standardize event audio to exactly `round(target * sample_rate)`
/// samples: shorter events are zero-padded at the end, longer ones keep a
/// centered slice.
pub fn standardize_window(
    samples: &[f32],
    sample_rate: u32,
    target: f64,
    source_ref: (String, usize),
) -> Result<Window> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("cannot standardize an empty event".into()));
    }
    let want = window_samples(sample_rate, target);
    let mut out = Vec::with_capacity(want);
    let mut start_offset = 0usize;
    if samples.len() >= want {
        start_offset = (samples.len() - want) / 2;
        out.extend_from_slice(&samples[start_offset..start_offset + want]);
    } else {
        out.extend_from_slice(samples);
        out.resize(want, 0.0);
    }
    Ok(Window {
        samples: out,
        sample_rate,
        source_ref: (source_ref.0, source_ref.1 + start_offset),
        class_label: None,
        user_id: None,
    })
}

/// Cut a clip into consecutive non-overlapping windows. A trailing
/// remainder shorter than half a window is dropped; otherwise it is
/// zero-padded to full length.
pub fn slide_windows(clip: &AudioClip, clip_id: &str, window_len: f64) -> Vec<Window> {
    let want = window_samples(clip.sample_rate, window_len);
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < clip.samples.len() {
        let remaining = clip.samples.len() - pos;
        if remaining >= want {
            out.push(Window {
                samples: clip.samples[pos..pos + want].to_vec(),
                sample_rate: clip.sample_rate,
                source_ref: (String::from(clip_id), pos),
                class_label: None,
                user_id: None,
            });
        } else {
            // Keep the tail only if it is at least half a window long.
            if remaining * 2 >= want {
                let mut samples = clip.samples[pos..].to_vec();
                samples.resize(want, 0.0);
                out.push(Window {
                    samples,
                    sample_rate: clip.sample_rate,
                    source_ref: (String::from(clip_id), pos),
                    class_label: None,
                    user_id: None,
                });
            }
            break;
        }
        pos += want;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn clip(samples: Vec<f32>) -> AudioClip {
        AudioClip::new(samples, 44_100).unwrap()
    }

    /// A clip with bursts of the given (start_sec, dur_sec, amplitude).
    fn burst_clip(total_secs: f64, bursts: &[(f64, f64, f32)]) -> AudioClip {
        let sr = 44_100u32;
        let n = (total_secs * sr as f64).round() as usize;
        let mut samples = vec![0.0f32; n];
        let mut rng = Rng::new(7);
        for &(start, dur, amp) in bursts {
            let a = (start * sr as f64).round() as usize;
            let b = ((start + dur) * sr as f64).round() as usize;
            for slot in samples.iter_mut().take(b.min(n)).skip(a) {
                // Noise burst; sign flips avoid a pure DC block.
                *slot = amp * (rng.uniform() as f32 * 2.0 - 1.0);
            }
        }
        clip(samples)
    }

    #[test]
    fn frame_energy_zero_clip() {
        let c = clip(vec![0.0; 44_100]);
        let rms = frame_energy(&c, 0.020, 0.010).unwrap();
        assert!(rms.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_energy_constant_clip() {
        let c = clip(vec![0.25; 44_100]);
        let rms = frame_energy(&c, 0.020, 0.010).unwrap();
        for v in rms {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn frame_energy_count_one_second() {
        // floor((44100 - 882) / 441) + 1 = 99
        let c = clip(vec![0.1; 44_100]);
        let rms = frame_energy(&c, 0.020, 0.010).unwrap();
        assert_eq!(rms.len(), 99);
    }

    #[test]
    fn frame_energy_short_clip_errors() {
        let c = clip(vec![0.1; 100]);
        assert!(frame_energy(&c, 0.020, 0.010).is_err());
    }

    #[test]
    fn extract_events_silent_clip() {
        let c = clip(vec![0.0; 88_200]);
        let events = extract_events(&c, &SegmentParams::default()).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn extract_events_single_burst() {
        let c = burst_clip(2.0, &[(0.8, 0.3, 0.8)]);
        let events = extract_events(&c, &SegmentParams::default()).unwrap();
        assert_eq!(events.len(), 1);
        // Boundaries within 2 hops (882 samples) of the true burst.
        let tol = 882usize;
        let start = (0.8 * 44_100.0) as usize;
        let end = (1.1 * 44_100.0) as usize;
        assert!(events[0].start_sample.abs_diff(start) <= tol);
        assert!(events[0].end_sample.abs_diff(end) <= tol);
    }

    #[test]
    fn extract_events_merges_close_bursts() {
        // Two 0.2 s bursts separated by 0.1 s < intra_merge_gap 0.2 s.
        let c = burst_clip(2.0, &[(0.5, 0.2, 0.8), (0.8, 0.2, 0.8)]);
        let events = extract_events(&c, &SegmentParams::default()).unwrap();
        assert_eq!(events.len(), 1);
    }

    #[test]
    fn extract_events_scale_invariant() {
        let base = burst_clip(3.0, &[(0.4, 0.2, 0.5), (1.9, 0.3, 0.3)]);
        let events = extract_events(&base, &SegmentParams::default()).unwrap();
        for scale in [0.25f32, 3.0] {
            let scaled = clip(base.samples.iter().map(|s| s * scale).collect());
            let scaled_events = extract_events(&scaled, &SegmentParams::default()).unwrap();
            assert_eq!(events, scaled_events, "scale {scale}");
        }
    }

    #[test]
    fn extract_events_output_well_formed() {
        let c = burst_clip(4.0, &[(0.2, 0.15, 0.9), (1.2, 0.4, 0.4), (3.0, 0.06, 0.7)]);
        let params = SegmentParams::default();
        let events = extract_events(&c, &params).unwrap();
        let min_len = (params.min_event_dur * 44_100.0).round() as usize;
        for pair in events.windows(2) {
            assert!(pair[0].end_sample <= pair[1].start_sample);
        }
        for e in &events {
            assert!(e.len() >= min_len);
        }
    }

    #[test]
    fn frame_energy_prefix_stable_under_appended_silence() {
        let c = burst_clip(1.0, &[(0.2, 0.3, 0.6)]);
        let rms = frame_energy(&c, 0.020, 0.010).unwrap();
        let mut extended = c.samples.clone();
        extended.extend(vec![0.0f32; 22_050]);
        let rms2 = frame_energy(&clip(extended), 0.020, 0.010).unwrap();
        assert_eq!(&rms2[..rms.len()], &rms[..]);
    }

    #[test]
    fn group_episodes_two_second_rule() {
        let sr = 44_100u32;
        let ev = |a: f64, b: f64| EventBoundary {
            start_sample: (a * sr as f64) as usize,
            end_sample: (b * sr as f64) as usize,
        };
        // Gap 1.1 s <= 2 s: one episode.
        let eps = group_episodes(&[ev(0.0, 0.4), ev(1.5, 1.9)], sr, 2.0).unwrap();
        assert_eq!(eps.len(), 1);
        // Gap 2.6 s > 2 s: two episodes.
        let eps = group_episodes(&[ev(0.0, 0.4), ev(3.0, 3.4)], sr, 2.0).unwrap();
        assert_eq!(eps.len(), 2);
        // Empty input.
        let eps = group_episodes(&[], sr, 2.0).unwrap();
        assert!(eps.is_empty());
    }

    #[test]
    fn group_episodes_rejects_overlap() {
        let events = [
            EventBoundary { start_sample: 0, end_sample: 100 },
            EventBoundary { start_sample: 50, end_sample: 200 },
        ];
        assert!(group_episodes(&events, 44_100, 2.0).is_err());
    }

    #[test]
    fn group_episodes_idempotent() {
        let mut rng = Rng::new(13);
        for _ in 0..50 {
            let mut events = Vec::new();
            let mut pos = 0usize;
            for _ in 0..rng.below(8) + 1 {
                pos += rng.below(200_000) + 1;
                let len = rng.below(40_000) + 2_205;
                events.push(EventBoundary { start_sample: pos, end_sample: pos + len });
                pos += len;
            }
            let eps = group_episodes(&events, 44_100, 2.0).unwrap();
            let flattened: Vec<EventBoundary> =
                eps.iter().flat_map(|e| e.events.iter().copied()).collect();
            let regrouped = group_episodes(&flattened, 44_100, 2.0).unwrap();
            assert_eq!(eps, regrouped);
        }
    }

    #[test]
    fn standardize_short_event_pads_end() {
        // 0.3 s event: 13230 samples -> 22050 with 8820 trailing zeros.
        let samples = vec![0.5f32; 13_230];
        let w = standardize_window(&samples, 44_100, 0.5, ("c".into(), 0)).unwrap();
        assert_eq!(w.samples.len(), 22_050);
        assert!(w.samples[..13_230].iter().all(|&s| s == 0.5));
        assert!(w.samples[13_230..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn standardize_long_event_takes_center() {
        // 0.7 s event: 30870 samples -> keep [4410, 26460).
        let samples: Vec<f32> = (0..30_870).map(|i| i as f32).collect();
        let w = standardize_window(&samples, 44_100, 0.5, ("c".into(), 100)).unwrap();
        assert_eq!(w.samples.len(), 22_050);
        assert_eq!(w.samples[0], 4_410.0);
        assert_eq!(*w.samples.last().unwrap(), 26_459.0);
        assert_eq!(w.source_ref.1, 100 + 4_410);
    }

    #[test]
    fn standardize_exact_event_unchanged() {
        let samples: Vec<f32> = (0..22_050).map(|i| (i % 7) as f32 * 0.1).collect();
        let w = standardize_window(&samples, 44_100, 0.5, ("c".into(), 0)).unwrap();
        assert_eq!(w.samples, samples);
    }

    #[test]
    fn standardize_empty_event_errors() {
        assert!(standardize_window(&[], 44_100, 0.5, ("c".into(), 0)).is_err());
    }

    #[test]
    fn slide_windows_remainder_rules() {
        let mk = |secs: f64| clip(vec![0.3f32; (secs * 44_100.0).round() as usize]);
        assert_eq!(slide_windows(&mk(2.0), "c", 0.5).len(), 4);
        // 0.3 s remainder >= 0.25 s: padded fifth window.
        assert_eq!(slide_windows(&mk(2.3), "c", 0.5).len(), 5);
        // 0.1 s remainder < 0.25 s: dropped.
        assert_eq!(slide_windows(&mk(2.1), "c", 0.5).len(), 4);
    }

    #[test]
    fn all_windows_have_standard_length() {
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let n = rng.below(100_000) + 1;
            let c = clip((0..n).map(|_| rng.uniform() as f32 - 0.5).collect());
            for w in slide_windows(&c, "c", 0.5) {
                assert_eq!(w.samples.len(), 22_050);
            }
        }
    }
}
