//! Binary artifact formats: P6 PPM images, MELS spectrogram dumps, and
//! the CLPD checkpoint container.
//!
//! CLPD layout (all integers little-endian):
//!   magic "CLPD", u32 version (= 1), u64 config length, config UTF-8,
//!   then three record sections (parameters, optimizer, RNG), each a u32
//!   record count followed by records:
//!     u32 name length, name UTF-8, u8 dtype tag (0 = f32, 1 = u64),
//!     u8 rank, u64 dims..., payload (LE f32 or LE u64 per tag).

use std::fs;
use std::io;
use std::path::Path;

use oad_core::features::{MelSpectrogram, SpectrogramImage};
use oad_core::nn::{Checkpoint, Record, RecordData};

#[derive(Debug)]
pub enum FormatError {
    Io(String, io::Error),
    Corrupt(String, String),
    Version(String, u32),
}

impl std::fmt::Display for FormatError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FormatError::Io(path, e) => write!(f, "{path}: {e}"),
            FormatError::Corrupt(path, msg) => write!(f, "{path}: corrupt file: {msg}"),
            FormatError::Version(path, v) => {
                write!(f, "{path}: unsupported version {v} (supported: 1)")
            }
        }
    }
}

impl std::error::Error for FormatError {}

type Result<T> = std::result::Result<T, FormatError>;

// ---------------------------------------------------------------- PPM

/// Binary PPM (P6, maxval 255).
pub fn write_ppm(path: &Path, image: &SpectrogramImage) -> Result<()> {
    let display = path.display().to_string();
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    fs::write(path, out).map_err(|e| FormatError::Io(display, e))
}

pub fn read_ppm(path: &Path) -> Result<SpectrogramImage> {
    let display = path.display().to_string();
    let data = fs::read(path).map_err(|e| FormatError::Io(display.clone(), e))?;
    let corrupt = |msg: &str| FormatError::Corrupt(display.clone(), msg.into());

    // Header: "P6" then three whitespace-separated integers.
    fn token(data: &[u8], pos: usize) -> Option<(usize, usize)> {
        let mut start = pos;
        while start < data.len() && data[start].is_ascii_whitespace() {
            start += 1;
        }
        let mut end = start;
        while end < data.len() && !data[end].is_ascii_whitespace() {
            end += 1;
        }
        (end > start).then_some((start, end))
    }
    let (s, e) = token(&data, 0).ok_or_else(|| corrupt("missing magic"))?;
    if &data[s..e] != b"P6" {
        return Err(corrupt("not a P6 file"));
    }
    let mut pos = e;
    let mut ints = [0usize; 3];
    for slot in ints.iter_mut() {
        let (s, e) = token(&data, pos).ok_or_else(|| corrupt("truncated header"))?;
        *slot = std::str::from_utf8(&data[s..e])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| corrupt("bad header integer"))?;
        pos = e;
    }
    let [width, height, maxval] = ints;
    if maxval != 255 {
        return Err(corrupt("maxval must be 255"));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height * 3;
    if data.len() < pos + need {
        return Err(corrupt("truncated pixel data"));
    }
    Ok(SpectrogramImage {
        pixels: data[pos..pos + need].to_vec(),
        height,
        width,
        colormap_id: String::new(),
    })
}

// --------------------------------------------------------------- MELS

const MELS_MAGIC: &[u8; 4] = b"MELS";

/// Spectrogram dump: magic "MELS", u32 n_mels, u32 n_frames, then
/// row-major LE f32 values. The header carries no sample rate; readers
/// get 0 there.
pub fn write_mels(path: &Path, spec: &MelSpectrogram) -> Result<()> {
    let display = path.display().to_string();
    let mut out = Vec::with_capacity(12 + spec.values.len() * 4);
    out.extend_from_slice(MELS_MAGIC);
    out.extend_from_slice(&(spec.n_mels as u32).to_le_bytes());
    out.extend_from_slice(&(spec.n_frames as u32).to_le_bytes());
    for v in &spec.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| FormatError::Io(display, e))
}

pub fn read_mels(path: &Path) -> Result<MelSpectrogram> {
    let display = path.display().to_string();
    let data = fs::read(path).map_err(|e| FormatError::Io(display.clone(), e))?;
    let corrupt = |msg: &str| FormatError::Corrupt(display.clone(), msg.into());
    if data.len() < 12 || &data[0..4] != MELS_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(data[o..o + 4].try_into().unwrap());
    let n_mels = u32_at(4) as usize;
    let n_frames = u32_at(8) as usize;
    let need = 12 + n_mels * n_frames * 4;
    if data.len() < need {
        return Err(corrupt("truncated values"));
    }
    let values = data[12..need]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(MelSpectrogram { values, n_mels, n_frames, sample_rate: 0 })
}

// --------------------------------------------------------------- CLPD

const CLPD_MAGIC: &[u8; 4] = b"CLPD";
pub const CLPD_VERSION: u32 = 1;

fn push_record(out: &mut Vec<u8>, record: &Record) {
    out.extend_from_slice(&(record.name.len() as u32).to_le_bytes());
    out.extend_from_slice(record.name.as_bytes());
    let tag: u8 = match record.data {
        RecordData::F32(_) => 0,
        RecordData::U64(_) => 1,
    };
    out.push(tag);
    out.push(record.dims.len() as u8);
    for &d in &record.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match &record.data {
        RecordData::F32(values) => {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        RecordData::U64(values) => {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

pub fn checkpoint_to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CLPD_MAGIC);
    out.extend_from_slice(&ckpt.version.to_le_bytes());
    out.extend_from_slice(&(ckpt.config_text.len() as u64).to_le_bytes());
    out.extend_from_slice(ckpt.config_text.as_bytes());
    for section in [&ckpt.params, &ckpt.opt, &ckpt.rng] {
        out.extend_from_slice(&(section.len() as u32).to_le_bytes());
        for record in section {
            push_record(&mut out, record);
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let display = path.display().to_string();
    fs::write(path, checkpoint_to_bytes(ckpt)).map_err(|e| FormatError::Io(display, e))
}

struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(FormatError::Corrupt(self.path.into(), "truncated file".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn record(&mut self) -> Result<Record> {
        let name_len = self.u32()? as usize;
        if name_len > 4096 {
            return Err(FormatError::Corrupt(self.path.into(), "record name too long".into()));
        }
        let name = String::from_utf8(self.take(name_len)?.to_vec())
            .map_err(|_| FormatError::Corrupt(self.path.into(), "record name not UTF-8".into()))?;
        let tag = self.take(1)?[0];
        let rank = self.take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u64()? as usize);
        }
        let numel: usize = dims.iter().product();
        let data = match tag {
            0 => {
                let bytes = self.take(numel * 4)?;
                RecordData::F32(
                    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
                )
            }
            1 => {
                let bytes = self.take(numel * 8)?;
                RecordData::U64(
                    bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect(),
                )
            }
            other => {
                return Err(FormatError::Corrupt(
                    self.path.into(),
                    format!("unknown dtype tag {other}"),
                ))
            }
        };
        Ok(Record { name, dims, data })
    }
}

pub fn checkpoint_from_bytes(path_label: &str, data: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader { data, pos: 0, path: path_label };
    if r.take(4)? != CLPD_MAGIC {
        return Err(FormatError::Corrupt(path_label.into(), "bad magic".into()));
    }
    let version = r.u32()?;
    if version != CLPD_VERSION {
        return Err(FormatError::Version(path_label.into(), version));
    }
    let config_len = r.u64()? as usize;
    if config_len > 1 << 20 {
        return Err(FormatError::Corrupt(path_label.into(), "config blob too large".into()));
    }
    let config_text = String::from_utf8(r.take(config_len)?.to_vec())
        .map_err(|_| FormatError::Corrupt(path_label.into(), "config not UTF-8".into()))?;
    let mut sections = Vec::with_capacity(3);
    for _ in 0..3 {
        let count = r.u32()? as usize;
        if count > 1 << 16 {
            return Err(FormatError::Corrupt(path_label.into(), "record count too large".into()));
        }
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            records.push(r.record()?);
        }
        sections.push(records);
    }
    if r.pos != data.len() {
        return Err(FormatError::Corrupt(path_label.into(), "trailing bytes".into()));
    }
    let rng = sections.pop().unwrap();
    let opt = sections.pop().unwrap();
    let params = sections.pop().unwrap();
    Ok(Checkpoint { version, config_text, params, opt, rng })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let display = path.display().to_string();
    let data = fs::read(path).map_err(|e| FormatError::Io(display.clone(), e))?;
    checkpoint_from_bytes(&display, &data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use oad_core::features::{default_colormap, render_image};
    use oad_core::nn::checkpoint::{build_checkpoint, PipelineDescriptor};
    use oad_core::nn::{EncoderConfig, Model, Optimizer, OptimizerKind};
    use oad_core::Rng;

    fn temp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("oad-format-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn sample_checkpoint(seed: u64) -> Checkpoint {
        let cfg = EncoderConfig {
            in_channels: 1,
            input_h: 8,
            input_w: 8,
            block_channels: vec![2, 3],
            embed_dim: 4,
        };
        let mut rng = Rng::new(seed);
        let model: Model<f32> = Model::new(cfg.clone(), &mut rng).unwrap();
        let opt = Optimizer::new(OptimizerKind::adam(1e-3), &model);
        let desc = PipelineDescriptor {
            encoder: cfg,
            mode: oad_core::augment::AugmentMode::Aa,
            features: oad_core::features::FeatureParams::default(),
            sample_rate: 44_100,
        };
        build_checkpoint(&desc, &model, &opt, &rng)
    }

    #[test]
    fn clpd_round_trip_is_bit_exact() {
        let ckpt = sample_checkpoint(5);
        let bytes = checkpoint_to_bytes(&ckpt);
        let back = checkpoint_from_bytes("mem", &bytes).unwrap();
        assert_eq!(ckpt, back);
        // save -> load -> save yields identical bytes.
        let again = checkpoint_to_bytes(&back);
        assert_eq!(bytes, again);
    }

    #[test]
    fn clpd_file_round_trip_restores_forward() {
        let ckpt = sample_checkpoint(9);
        let path = temp("model.clpd");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        let m1 = ckpt.model().unwrap();
        let m2 = back.model().unwrap();
        let input: Vec<f32> = (0..64).map(|i| (i as f32 * 0.21).cos()).collect();
        assert_eq!(
            m1.forward_sample(&input).unwrap().0,
            m2.forward_sample(&input).unwrap().0
        );
    }

    #[test]
    fn clpd_truncation_detected() {
        let bytes = checkpoint_to_bytes(&sample_checkpoint(2));
        for cut in [3usize, 9, 20, bytes.len() / 2, bytes.len() - 1] {
            let err = checkpoint_from_bytes("mem", &bytes[..cut]).unwrap_err();
            assert!(matches!(err, FormatError::Corrupt(_, _)), "cut {cut}: {err}");
        }
    }

    #[test]
    fn clpd_bad_magic_and_version_detected() {
        let mut bytes = checkpoint_to_bytes(&sample_checkpoint(3));
        bytes[0] = b'X';
        assert!(matches!(
            checkpoint_from_bytes("mem", &bytes).unwrap_err(),
            FormatError::Corrupt(_, _)
        ));

        let mut bytes = checkpoint_to_bytes(&sample_checkpoint(3));
        bytes[4] = 9; // version 9
        assert!(matches!(
            checkpoint_from_bytes("mem", &bytes).unwrap_err(),
            FormatError::Version(_, 9)
        ));
    }

    #[test]
    fn ppm_round_trip() {
        let spec = MelSpectrogram {
            values: (0..64).map(|i| -80.0 + (i as f32) * 1.2).collect(),
            n_mels: 8,
            n_frames: 8,
            sample_rate: 44_100,
        };
        let img = render_image(&spec, &default_colormap()).unwrap();
        let path = temp("spec.ppm");
        write_ppm(&path, &img).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back.pixels, img.pixels);
        assert_eq!((back.width, back.height), (img.width, img.height));
    }

    #[test]
    fn ppm_rejects_garbage() {
        let path = temp("bad.ppm");
        fs::write(&path, b"P5\n2 2\n255\nxxxx").unwrap();
        assert!(read_ppm(&path).is_err());
    }

    #[test]
    fn mels_round_trip() {
        let spec = MelSpectrogram {
            values: (0..32).map(|i| -(i as f32) * 2.5).collect(),
            n_mels: 4,
            n_frames: 8,
            sample_rate: 44_100,
        };
        let path = temp("spec.mels");
        write_mels(&path, &spec).unwrap();
        let back = read_mels(&path).unwrap();
        assert_eq!(back.values, spec.values);
        assert_eq!((back.n_mels, back.n_frames), (spec.n_mels, spec.n_frames));
    }

    #[test]
    fn mels_rejects_truncation() {
        let spec = MelSpectrogram {
            values: vec![0.0; 16],
            n_mels: 4,
            n_frames: 4,
            sample_rate: 44_100,
        };
        let path = temp("trunc.mels");
        write_mels(&path, &spec).unwrap();
        let mut data = fs::read(&path).unwrap();
        data.truncate(data.len() - 5);
        fs::write(&path, data).unwrap();
        assert!(read_mels(&path).is_err());
    }
}
