//! In-memory checkpoint representation.
//!
//! A checkpoint is a config text blob plus three record sections (model
//! parameters, optimizer state, RNG state). The `oad` crate serializes
//! this structure to the CLPD container; everything here is file-format
//! agnostic.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::model::{EncoderConfig, Model};
use super::optim::{Optimizer, OptimizerKind};
use crate::augment::AugmentMode;
use crate::error::{Error, Result};
use crate::features::FeatureParams;
use crate::rng::Rng;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum RecordData {
    F32(Vec<f32>),
    U64(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: RecordData,
}

impl Record {
    pub fn f32(name: &str, dims: &[usize], data: Vec<f32>) -> Self {
        Record { name: name.to_string(), dims: dims.to_vec(), data: RecordData::F32(data) }
    }

    pub fn u64(name: &str, data: Vec<u64>) -> Self {
        let dims = alloc::vec![data.len()];
        Record { name: name.to_string(), dims, data: RecordData::U64(data) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config_text: String,
    pub params: Vec<Record>,
    pub opt: Vec<Record>,
    pub rng: Vec<Record>,
}

/// Everything a checkpoint consumer needs to rebuild the featurization
/// and encoder pipeline, written as `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineDescriptor {
    pub encoder: EncoderConfig,
    pub mode: AugmentMode,
    pub features: FeatureParams,
    pub sample_rate: u32,
}

impl PipelineDescriptor {
    pub fn to_text(&self) -> String {
        let blocks: Vec<String> =
            self.encoder.block_channels.iter().map(|c| c.to_string()).collect();
        format!(
            "encoder.in_channels = {}\nencoder.input_h = {}\nencoder.input_w = {}\n\
             encoder.blocks = {}\nencoder.embed_dim = {}\naugment.mode = {}\n\
             feature.n_fft = {}\nfeature.hop = {}\nfeature.n_mels = {}\n\
             feature.fmin = {:?}\nfeature.fmax = {:?}\nsample_rate = {}\n",
            self.encoder.in_channels,
            self.encoder.input_h,
            self.encoder.input_w,
            blocks.join(" "),
            self.encoder.embed_dim,
            match self.mode {
                AugmentMode::Ia => "ia",
                AugmentMode::Aa => "aa",
            },
            self.features.n_fft,
            self.features.hop,
            self.features.n_mels,
            self.features.fmin,
            self.features.fmax,
            self.sample_rate,
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut desc = PipelineDescriptor {
            encoder: EncoderConfig::default(),
            mode: AugmentMode::Aa,
            features: FeatureParams::default(),
            sample_rate: 44_100,
        };
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::BadCheckpoint(format!("bad config line: {line}")))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| Error::BadCheckpoint(format!("bad {what}: {value}"));
            match key {
                "encoder.in_channels" => {
                    desc.encoder.in_channels = value.parse().map_err(|_| bad(key))?
                }
                "encoder.input_h" => desc.encoder.input_h = value.parse().map_err(|_| bad(key))?,
                "encoder.input_w" => desc.encoder.input_w = value.parse().map_err(|_| bad(key))?,
                "encoder.blocks" => {
                    desc.encoder.block_channels = value
                        .split_whitespace()
                        .map(|v| v.parse().map_err(|_| bad(key)))
                        .collect::<Result<Vec<usize>>>()?
                }
                "encoder.embed_dim" => {
                    desc.encoder.embed_dim = value.parse().map_err(|_| bad(key))?
                }
                "augment.mode" => {
                    desc.mode = match value {
                        "ia" => AugmentMode::Ia,
                        "aa" => AugmentMode::Aa,
                        _ => return Err(bad(key)),
                    }
                }
                "feature.n_fft" => desc.features.n_fft = value.parse().map_err(|_| bad(key))?,
                "feature.hop" => desc.features.hop = value.parse().map_err(|_| bad(key))?,
                "feature.n_mels" => desc.features.n_mels = value.parse().map_err(|_| bad(key))?,
                "feature.fmin" => desc.features.fmin = value.parse().map_err(|_| bad(key))?,
                "feature.fmax" => desc.features.fmax = value.parse().map_err(|_| bad(key))?,
                "sample_rate" => desc.sample_rate = value.parse().map_err(|_| bad(key))?,
                other => {
                    return Err(Error::BadCheckpoint(format!("unknown config key: {other}")))
                }
            }
        }
        Ok(desc)
    }
}

impl Model<f32> {
    pub fn to_records(&self) -> Vec<Record> {
        self.param_names()
            .iter()
            .zip(self.params())
            .map(|(name, p)| Record::f32(name, p.shape(), p.data().to_vec()))
            .collect()
    }

    pub fn from_records(config: EncoderConfig, records: &[Record]) -> Result<Self> {
        let mut model = Model::new(config, &mut Rng::new(0))?;
        let names = model.param_names();
        if records.len() != names.len() {
            return Err(Error::BadCheckpoint(format!(
                "expected {} parameter records, found {}",
                names.len(),
                records.len()
            )));
        }
        for (slot, (name, record)) in
            model.params_mut().into_iter().zip(names.iter().zip(records))
        {
            if &record.name != name {
                return Err(Error::BadCheckpoint(format!(
                    "parameter record {} where {name} was expected",
                    record.name
                )));
            }
            let data = match &record.data {
                RecordData::F32(v) => v,
                RecordData::U64(_) => {
                    return Err(Error::BadCheckpoint(format!("{name} has a non-f32 payload")))
                }
            };
            if record.dims != slot.shape() || data.len() != slot.numel() {
                return Err(Error::BadCheckpoint(format!(
                    "{name}: dims {:?} do not match expected {:?}",
                    record.dims,
                    slot.shape()
                )));
            }
            slot.data_mut().copy_from_slice(data);
        }
        Ok(model)
    }
}

impl Optimizer<f32> {
    pub fn to_records(&self, param_names: &[String]) -> Vec<Record> {
        let mut out = Vec::new();
        let kind_tag = match self.kind {
            OptimizerKind::Sgd { .. } => 0u64,
            OptimizerKind::Adam { .. } => 1u64,
        };
        out.push(Record::u64("opt.kind", alloc::vec![kind_tag]));
        out.push(Record::u64("opt.step", alloc::vec![self.step_count]));
        // Hyperparameters as f64 bit patterns so they round-trip exactly.
        let hyper: Vec<u64> = match self.kind {
            OptimizerKind::Sgd { lr, momentum } => alloc::vec![lr.to_bits(), momentum.to_bits()],
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                alloc::vec![lr.to_bits(), beta1.to_bits(), beta2.to_bits(), eps.to_bits()]
            }
        };
        out.push(Record::u64("opt.hyper", hyper));
        for (name, slot) in param_names.iter().zip(&self.slot_m) {
            out.push(Record::f32(&format!("opt.m.{name}"), slot.shape(), slot.data().to_vec()));
        }
        for (name, slot) in param_names.iter().zip(&self.slot_v) {
            out.push(Record::f32(&format!("opt.v.{name}"), slot.shape(), slot.data().to_vec()));
        }
        out
    }

    pub fn from_records(model: &Model<f32>, records: &[Record]) -> Result<Self> {
        let find = |name: &str| -> Result<&Record> {
            records
                .iter()
                .find(|r| r.name == name)
                .ok_or_else(|| Error::BadCheckpoint(format!("missing optimizer record {name}")))
        };
        let kind_tag = match &find("opt.kind")?.data {
            RecordData::U64(v) if v.len() == 1 => v[0],
            _ => return Err(Error::BadCheckpoint("bad opt.kind record".into())),
        };
        let step = match &find("opt.step")?.data {
            RecordData::U64(v) if v.len() == 1 => v[0],
            _ => return Err(Error::BadCheckpoint("bad opt.step record".into())),
        };
        let hyper: Vec<f64> = match &find("opt.hyper")?.data {
            RecordData::U64(v) => v.iter().map(|&bits| f64::from_bits(bits)).collect(),
            _ => return Err(Error::BadCheckpoint("bad opt.hyper record".into())),
        };
        let kind = match (kind_tag, hyper.as_slice()) {
            (0, [lr, momentum]) => OptimizerKind::Sgd { lr: *lr, momentum: *momentum },
            (1, [lr, b1, b2, eps]) => {
                OptimizerKind::Adam { lr: *lr, beta1: *b1, beta2: *b2, eps: *eps }
            }
            _ => return Err(Error::BadCheckpoint("unrecognized optimizer kind".into())),
        };
        let mut opt = Optimizer::new(kind, model);
        opt.step_count = step;
        for (name, slot) in model.param_names().iter().zip(opt.slot_m.iter_mut()) {
            let rec = find(&format!("opt.m.{name}"))?;
            match &rec.data {
                RecordData::F32(v) if v.len() == slot.numel() => {
                    slot.data_mut().copy_from_slice(v)
                }
                _ => return Err(Error::BadCheckpoint(format!("bad record opt.m.{name}"))),
            }
        }
        for (name, slot) in model.param_names().iter().zip(opt.slot_v.iter_mut()) {
            let rec = find(&format!("opt.v.{name}"))?;
            match &rec.data {
                RecordData::F32(v) if v.len() == slot.numel() => {
                    slot.data_mut().copy_from_slice(v)
                }
                _ => return Err(Error::BadCheckpoint(format!("bad record opt.v.{name}"))),
            }
        }
        Ok(opt)
    }
}

/// Assemble a checkpoint from trained state.
pub fn build_checkpoint(
    descriptor: &PipelineDescriptor,
    model: &Model<f32>,
    opt: &Optimizer<f32>,
    rng: &Rng,
) -> Checkpoint {
    Checkpoint {
        version: CHECKPOINT_VERSION,
        config_text: descriptor.to_text(),
        params: model.to_records(),
        opt: opt.to_records(&model.param_names()),
        rng: alloc::vec![Record::u64("rng.state", rng.state().to_vec())],
    }
}

impl Checkpoint {
    pub fn descriptor(&self) -> Result<PipelineDescriptor> {
        PipelineDescriptor::parse(&self.config_text)
    }

    pub fn model(&self) -> Result<Model<f32>> {
        let desc = self.descriptor()?;
        Model::from_records(desc.encoder, &self.params)
    }

    pub fn optimizer(&self, model: &Model<f32>) -> Result<Optimizer<f32>> {
        Optimizer::from_records(model, &self.opt)
    }

    pub fn rng_state(&self) -> Result<Rng> {
        let rec = self
            .rng
            .iter()
            .find(|r| r.name == "rng.state")
            .ok_or_else(|| Error::BadCheckpoint("missing rng.state".into()))?;
        match &rec.data {
            RecordData::U64(v) if v.len() == 4 => {
                Ok(Rng::from_state([v[0], v[1], v[2], v[3]]))
            }
            _ => Err(Error::BadCheckpoint("bad rng.state record".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn descriptor() -> PipelineDescriptor {
        PipelineDescriptor {
            encoder: EncoderConfig::default(),
            mode: AugmentMode::Aa,
            features: FeatureParams::default(),
            sample_rate: 44_100,
        }
    }

    #[test]
    fn descriptor_text_round_trip() {
        let desc = descriptor();
        let parsed = PipelineDescriptor::parse(&desc.to_text()).unwrap();
        assert_eq!(desc, parsed);
    }

    #[test]
    fn descriptor_rejects_unknown_keys() {
        assert!(PipelineDescriptor::parse("bogus.key = 1\n").is_err());
    }

    #[test]
    fn checkpoint_reproduces_forward_pass() {
        let mut rng = Rng::new(42);
        let cfg = EncoderConfig {
            in_channels: 1,
            input_h: 8,
            input_w: 8,
            block_channels: vec![2, 3],
            embed_dim: 4,
        };
        let model: Model<f32> = Model::new(cfg.clone(), &mut rng).unwrap();
        let opt = Optimizer::new(OptimizerKind::adam(1e-3), &model);
        let desc = PipelineDescriptor { encoder: cfg, ..descriptor() };
        let ckpt = build_checkpoint(&desc, &model, &opt, &rng);

        let restored = ckpt.model().unwrap();
        let input: Vec<f32> = (0..64).map(|i| (i as f32 * 0.37).sin()).collect();
        let (z1, _) = model.forward_sample(&input).unwrap();
        let (z2, _) = restored.forward_sample(&input).unwrap();
        assert_eq!(z1, z2);

        let opt2 = ckpt.optimizer(&restored).unwrap();
        assert_eq!(opt.step_count, opt2.step_count);
        assert_eq!(opt.kind, opt2.kind);

        let rng2 = ckpt.rng_state().unwrap();
        assert_eq!(rng.state(), rng2.state());
    }
}
