//! RIFF/WAVE reader and writer.
//!
//! Reads PCM WAV: 16-bit integer or 32-bit float, any channel count
//! (averaged to mono). Integer samples scale to [-1, 1] by division by
//! 32768. Writes 16-bit PCM mono.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use oad_core::segment::AudioClip;

#[derive(Debug)]
pub enum WavError {
    Io(String, io::Error),
    Format(String, String),
}

impl std::fmt::Display for WavError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WavError::Io(path, e) => write!(f, "{path}: {e}"),
            WavError::Format(path, msg) => write!(f, "{path}: {msg}"),
        }
    }
}

impl std::error::Error for WavError {}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WavError> {
        if self.pos + n > self.data.len() {
            return Err(WavError::Format(self.path.into(), "truncated file".into()));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, WavError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16, WavError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}

/// Load a WAV file as a mono clip.
pub fn load_audio(path: &Path) -> Result<AudioClip, WavError> {
    let display = path.display().to_string();
    let data = fs::read(path).map_err(|e| WavError::Io(display.clone(), e))?;
    let mut r = Reader { data: &data, pos: 0, path: &display };

    if r.take(4)? != b"RIFF" {
        return Err(WavError::Format(display, "not a RIFF file".into()));
    }
    let _riff_len = r.u32()?;
    if r.take(4)? != b"WAVE" {
        return Err(WavError::Format(display, "not a WAVE file".into()));
    }

    let mut format: Option<(u16, u16, u32, u16)> = None; // (tag, channels, rate, bits)
    let mut samples: Option<Vec<f32>> = None;
    while r.pos + 8 <= r.data.len() {
        let chunk_id: [u8; 4] = r.take(4)?.try_into().unwrap();
        let chunk_len = r.u32()? as usize;
        match &chunk_id {
            b"fmt " => {
                if chunk_len < 16 {
                    return Err(WavError::Format(display, "fmt chunk too short".into()));
                }
                let tag = r.u16()?;
                let channels = r.u16()?;
                let rate = r.u32()?;
                let _byte_rate = r.u32()?;
                let _block_align = r.u16()?;
                let bits = r.u16()?;
                r.take(chunk_len - 16)?;
                format = Some((tag, channels, rate, bits));
            }
            b"data" => {
                let (tag, channels, _, bits) = format.ok_or_else(|| {
                    WavError::Format(display.clone(), "data chunk before fmt".into())
                })?;
                let body = r.take(chunk_len)?;
                samples = Some(decode_samples(&display, body, tag, channels, bits)?);
            }
            _ => {
                // Skip unknown chunks (word-aligned).
                r.take(chunk_len.min(r.data.len() - r.pos))?;
            }
        }
        if chunk_len % 2 == 1 && r.pos < r.data.len() {
            r.pos += 1;
        }
    }

    let (_, _, rate, _) =
        format.ok_or_else(|| WavError::Format(display.clone(), "missing fmt chunk".into()))?;
    let samples =
        samples.ok_or_else(|| WavError::Format(display.clone(), "missing data chunk".into()))?;
    if samples.is_empty() {
        return Err(WavError::Format(display, "zero-length audio stream".into()));
    }
    AudioClip::new(samples, rate)
        .map_err(|e| WavError::Format(display, e.to_string()))
}

fn decode_samples(
    path: &str,
    body: &[u8],
    tag: u16,
    channels: u16,
    bits: u16,
) -> Result<Vec<f32>, WavError> {
    if channels == 0 {
        return Err(WavError::Format(path.into(), "zero channels".into()));
    }
    let ch = channels as usize;
    match (tag, bits) {
        // PCM 16-bit integer.
        (1, 16) => {
            let frame_bytes = 2 * ch;
            let frames = body.len() / frame_bytes;
            let mut out = Vec::with_capacity(frames);
            for f in 0..frames {
                let mut acc = 0.0f64;
                for c in 0..ch {
                    let o = f * frame_bytes + c * 2;
                    let v = i16::from_le_bytes([body[o], body[o + 1]]);
                    acc += v as f64 / 32768.0;
                }
                out.push((acc / ch as f64) as f32);
            }
            Ok(out)
        }
        // IEEE float 32-bit.
        (3, 32) => {
            let frame_bytes = 4 * ch;
            let frames = body.len() / frame_bytes;
            let mut out = Vec::with_capacity(frames);
            for f in 0..frames {
                let mut acc = 0.0f64;
                for c in 0..ch {
                    let o = f * frame_bytes + c * 4;
                    let v = f32::from_le_bytes([body[o], body[o + 1], body[o + 2], body[o + 3]]);
                    acc += v as f64;
                }
                out.push((acc / ch as f64) as f32);
            }
            Ok(out)
        }
        (tag, bits) => Err(WavError::Format(
            path.into(),
            format!("unsupported codec: format tag {tag}, {bits} bits (need PCM16 or float32)"),
        )),
    }
}

/// Write a mono clip as 16-bit PCM.
pub fn write_audio(path: &Path, clip: &AudioClip) -> Result<(), WavError> {
    let display = path.display().to_string();
    let n = clip.samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        // Symmetric with the reader's /32768; +1.0 clamps to 32767.
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| WavError::Io(display.clone(), e))?;
    file.write_all(&out).map_err(|e| WavError::Io(display, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("oad-wav-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn raw_wav(tag: u16, channels: u16, rate: u32, bits: u16, body: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + body.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * channels as u32 * (bits as u32 / 8)).to_le_bytes());
        out.extend_from_slice(&(channels * bits / 8).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(body);
        out
    }

    #[test]
    fn silence_decodes_to_zeros() {
        let path = temp("silence.wav");
        fs::write(&path, raw_wav(1, 1, 44_100, 16, &[0u8; 200])).unwrap();
        let clip = load_audio(&path).unwrap();
        assert_eq!(clip.sample_rate, 44_100);
        assert_eq!(clip.samples.len(), 100);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm16_half_scale() {
        // 16384 / 32768 = 0.5
        let path = temp("half.wav");
        let body = 16384i16.to_le_bytes();
        fs::write(&path, raw_wav(1, 1, 22_050, 16, &body)).unwrap();
        let clip = load_audio(&path).unwrap();
        assert_eq!(clip.samples, vec![0.5]);
    }

    #[test]
    fn stereo_averages_to_mono() {
        // Channels (0.2, 0.4) -> 0.3.
        let path = temp("stereo.wav");
        let mut body = Vec::new();
        body.extend_from_slice(&0.2f32.to_le_bytes());
        body.extend_from_slice(&0.4f32.to_le_bytes());
        fs::write(&path, raw_wav(3, 2, 44_100, 32, &body)).unwrap();
        let clip = load_audio(&path).unwrap();
        assert_eq!(clip.samples.len(), 1);
        assert!((clip.samples[0] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn unreadable_and_malformed_files_error_with_path() {
        let missing = temp("does-not-exist.wav");
        let err = load_audio(&missing).unwrap_err();
        assert!(err.to_string().contains("does-not-exist.wav"));

        let bad = temp("not-riff.wav");
        fs::write(&bad, b"JUNKJUNKJUNKJUNK").unwrap();
        let err = load_audio(&bad).unwrap_err();
        assert!(err.to_string().contains("RIFF"));
    }

    #[test]
    fn zero_length_stream_errors() {
        let path = temp("empty.wav");
        fs::write(&path, raw_wav(1, 1, 44_100, 16, &[])).unwrap();
        assert!(load_audio(&path).is_err());
    }

    #[test]
    fn unsupported_codec_errors() {
        let path = temp("alaw.wav");
        fs::write(&path, raw_wav(6, 1, 8_000, 8, &[0u8; 16])).unwrap();
        let err = load_audio(&path).unwrap_err();
        assert!(err.to_string().contains("unsupported codec"));
    }

    #[test]
    fn write_read_round_trip() {
        let path = temp("roundtrip.wav");
        let samples: Vec<f32> = (0..500).map(|i| ((i as f32) * 0.013).sin() * 0.8).collect();
        let clip = AudioClip::new(samples.clone(), 44_100).unwrap();
        write_audio(&path, &clip).unwrap();
        let back = load_audio(&path).unwrap();
        assert_eq!(back.sample_rate, 44_100);
        assert_eq!(back.samples.len(), samples.len());
        for (a, b) in back.samples.iter().zip(&samples) {
            assert!((a - b).abs() <= 0.5 / 32_768.0, "{a} vs {b}");
        }
    }

    #[test]
    fn writer_is_deterministic() {
        let clip = AudioClip::new(vec![0.1, -0.5, 0.9], 44_100).unwrap();
        let p1 = temp("det1.wav");
        let p2 = temp("det2.wav");
        write_audio(&p1, &clip).unwrap();
        write_audio(&p2, &clip).unwrap();
        assert_eq!(fs::read(p1).unwrap(), fs::read(p2).unwrap());
    }
}
