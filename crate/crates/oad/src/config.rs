//! Run configuration.
//!
//! A single structured file covers every stage. The format is a TOML-like
//! subset: `[section]` headers, `key = value` lines, `#` comments.
//! Unknown keys are rejected, every violation is reported (not just the
//! first), and CLI flags override file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use oad_core::augment::{AugmentConfig, AugmentMode, IaCompose};
use oad_core::features::FeatureParams;
use oad_core::nn::OptimizerKind;
use oad_core::opencon::OpenConConfig;
use oad_core::segment::SegmentParams;
use oad_core::simclr::SimClrConfig;
use oad_core::synth::SynthSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub n_models: usize,
    pub n_subsets: usize,
    pub test_fraction: f64,
    pub label_fraction: f64,
    pub resample_subsets: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            n_models: 5,
            n_subsets: 10,
            test_fraction: 0.2,
            label_fraction: 0.9,
            resample_subsets: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub users_per_class: usize,
    pub instances_per_user: usize,
    pub sample_rate: u32,
    pub snr_db: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings { users_per_class: 4, instances_per_user: 6, sample_rate: 44_100, snr_db: 30.0 }
    }
}

impl SynthSettings {
    pub fn to_spec(&self, seed: u64) -> SynthSpec {
        let mut spec = SynthSpec::default();
        spec.sample_rate = self.sample_rate;
        spec.seed = seed;
        for class in spec.classes.iter_mut() {
            class.n_users = self.users_per_class;
            class.instances_per_user = self.instances_per_user;
            class.snr_db = self.snr_db;
        }
        spec
    }
}

/// Everything configurable, mirroring each stage's config block.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub segment: SegmentParams,
    /// Classes segmented with sliding windows instead of event extraction.
    pub slide_classes: Vec<String>,
    pub features: FeatureParams,
    pub rgb_threshold: f64,
    pub augment: AugmentConfig,
    pub simclr: SimClrConfig,
    pub opencon: OpenConConfig,
    pub eval: EvalSettings,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            segment: SegmentParams::default(),
            slide_classes: vec!["cb".into()],
            features: FeatureParams::default(),
            rgb_threshold: 70.0,
            augment: AugmentConfig::default(),
            simclr: SimClrConfig::default(),
            opencon: OpenConConfig::default(),
            eval: EvalSettings::default(),
            synth: SynthSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn optimizer_lr(kind: &OptimizerKind) -> f64 {
    match kind {
        OptimizerKind::Sgd { lr, .. } => *lr,
        OptimizerKind::Adam { lr, .. } => *lr,
    }
}

/// Parse the file text onto defaults. Collects every error instead of
/// stopping at the first; an empty file yields all defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
    let mut config = RunConfig::default();
    let mut errors = Vec::new();
    let mut section = String::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            match name.strip_suffix(']') {
                Some(name)
                    if matches!(
                        name.trim(),
                        "segment" | "features" | "augment" | "simclr" | "opencon" | "eval"
                            | "synth"
                    ) =>
                {
                    section = name.trim().to_string();
                }
                Some(name) => errors.push(ConfigError {
                    key: name.trim().to_string(),
                    message: format!("unknown section (line {})", lineno + 1),
                }),
                None => errors.push(ConfigError {
                    key: line.to_string(),
                    message: format!("malformed section header (line {})", lineno + 1),
                }),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(ConfigError {
                key: line.to_string(),
                message: format!("expected 'key = value' (line {})", lineno + 1),
            });
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let full_key =
            if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        if let Some(prev) = seen.insert(full_key.clone(), lineno + 1) {
            errors.push(ConfigError {
                key: full_key.clone(),
                message: format!("set twice (lines {prev} and {})", lineno + 1),
            });
            continue;
        }
        if let Err(message) = apply_key(&mut config, &full_key, value) {
            errors.push(ConfigError { key: full_key, message });
        }
    }

    // Range invariants, all reported together.
    validate_ranges(&config, &mut errors);
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(errors)
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, what: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse '{value}' as {what}"))
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("cannot parse '{other}' as a boolean")),
    }
}

fn apply_key(config: &mut RunConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "segment.rel_threshold" => config.segment.rel_threshold = parse_num(value, "a number")?,
        "segment.min_event_dur" => config.segment.min_event_dur = parse_num(value, "seconds")?,
        "segment.intra_merge_gap" => config.segment.intra_merge_gap = parse_num(value, "seconds")?,
        "segment.frame_len" => config.segment.frame_len = parse_num(value, "seconds")?,
        "segment.hop" => config.segment.hop = parse_num(value, "seconds")?,
        "segment.episode_gap" => config.segment.episode_gap = parse_num(value, "seconds")?,
        "segment.window_len" => config.segment.window_len = parse_num(value, "seconds")?,
        "segment.slide_classes" => {
            config.slide_classes =
                value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
        }
        "features.n_fft" => config.features.n_fft = parse_num(value, "an integer")?,
        "features.hop" => config.features.hop = parse_num(value, "an integer")?,
        "features.n_mels" => config.features.n_mels = parse_num(value, "an integer")?,
        "features.fmin" => config.features.fmin = parse_num(value, "Hz")?,
        "features.fmax" => config.features.fmax = parse_num(value, "Hz")?,
        "features.rgb_threshold" => config.rgb_threshold = parse_num(value, "a number")?,
        "augment.mode" => {
            config.augment.mode = match value {
                "ia" => AugmentMode::Ia,
                "aa" => AugmentMode::Aa,
                other => return Err(format!("mode must be 'ia' or 'aa', got '{other}'")),
            }
        }
        "augment.crop_scale_min" => config.augment.crop_scale_range.0 = parse_num(value, "a number")?,
        "augment.crop_scale_max" => config.augment.crop_scale_range.1 = parse_num(value, "a number")?,
        "augment.crop_aspect_min" => {
            config.augment.crop_aspect_range.0 = parse_num(value, "a number")?
        }
        "augment.crop_aspect_max" => {
            config.augment.crop_aspect_range.1 = parse_num(value, "a number")?
        }
        "augment.blur_sigma_min" => config.augment.blur_sigma_range.0 = parse_num(value, "pixels")?,
        "augment.blur_sigma_max" => config.augment.blur_sigma_range.1 = parse_num(value, "pixels")?,
        "augment.pitch_min" => config.augment.pitch_semitone_range.0 = parse_num(value, "semitones")?,
        "augment.pitch_max" => config.augment.pitch_semitone_range.1 = parse_num(value, "semitones")?,
        "augment.rt60_min" => config.augment.reverb_rt60_range.0 = parse_num(value, "seconds")?,
        "augment.rt60_max" => config.augment.reverb_rt60_range.1 = parse_num(value, "seconds")?,
        "augment.wet_mix" => config.augment.reverb_wet_mix = parse_num(value, "a number")?,
        "augment.ia_compose" => {
            config.augment.ia_compose = match value {
                "both" => IaCompose::Both,
                "one-of" => IaCompose::OneOf,
                other => return Err(format!("ia_compose must be 'both' or 'one-of', got '{other}'")),
            }
        }
        "simclr.temperature" => config.simclr.temperature = parse_num(value, "a number")?,
        "simclr.batch_pairs" => config.simclr.batch_pairs = parse_num(value, "an integer")?,
        "simclr.epochs" => config.simclr.epochs = parse_num(value, "an integer")?,
        "simclr.learning_rate" => {
            config.simclr.optimizer = OptimizerKind::adam(parse_num(value, "a number")?)
        }
        "simclr.blocks" => {
            config.simclr.blocks = value
                .split(',')
                .map(|s| parse_num(s.trim(), "an integer"))
                .collect::<Result<Vec<usize>, String>>()?
        }
        "simclr.embed_dim" => config.simclr.embed_dim = parse_num(value, "an integer")?,
        "simclr.keep_last_batch" => config.simclr.keep_last_batch = parse_bool(value)?,
        "opencon.n_unknown" => config.opencon.n_unknown = parse_num(value, "an integer")?,
        "opencon.tau_con" => config.opencon.tau_con = parse_num(value, "a number")?,
        "opencon.tau_proto" => config.opencon.tau_proto = parse_num(value, "a number")?,
        "opencon.gamma" => config.opencon.gamma = parse_num(value, "a number")?,
        "opencon.lambda_percentile" => {
            config.opencon.lambda_percentile = parse_num(value, "a number")?
        }
        "opencon.epochs" => config.opencon.epochs = parse_num(value, "an integer")?,
        "opencon.batch" => config.opencon.batch = parse_num(value, "an integer")?,
        "opencon.finetune" => config.opencon.finetune = parse_bool(value)?,
        "opencon.learning_rate" => {
            config.opencon.optimizer = OptimizerKind::adam(parse_num(value, "a number")?)
        }
        "opencon.embed_view_noise" => {
            config.opencon.embed_view_noise = parse_num(value, "a number")?
        }
        "opencon.reseed_dead" => config.opencon.reseed_dead = parse_bool(value)?,
        "opencon.center_embeddings" => config.opencon.center_embeddings = parse_bool(value)?,
        "eval.n_models" => config.eval.n_models = parse_num(value, "an integer")?,
        "eval.n_subsets" => config.eval.n_subsets = parse_num(value, "an integer")?,
        "eval.test_fraction" => config.eval.test_fraction = parse_num(value, "a number")?,
        "eval.label_fraction" => config.eval.label_fraction = parse_num(value, "a number")?,
        "eval.resample_subsets" => config.eval.resample_subsets = parse_bool(value)?,
        "synth.users_per_class" => config.synth.users_per_class = parse_num(value, "an integer")?,
        "synth.instances_per_user" => {
            config.synth.instances_per_user = parse_num(value, "an integer")?
        }
        "synth.sample_rate" => config.synth.sample_rate = parse_num(value, "Hz")?,
        "synth.snr_db" => config.synth.snr_db = parse_num(value, "dB")?,
        other => return Err(format!("unknown key '{other}'")),
    }
    Ok(())
}

fn validate_ranges(config: &RunConfig, errors: &mut Vec<ConfigError>) {
    let mut push = |key: &str, message: String| {
        errors.push(ConfigError { key: key.to_string(), message });
    };
    let seg = &config.segment;
    if seg.rel_threshold <= 0.0 || seg.rel_threshold >= 1.0 {
        push("segment.rel_threshold", "must lie in (0, 1)".into());
    }
    for (key, v) in [
        ("segment.min_event_dur", seg.min_event_dur),
        ("segment.intra_merge_gap", seg.intra_merge_gap),
        ("segment.frame_len", seg.frame_len),
        ("segment.hop", seg.hop),
        ("segment.episode_gap", seg.episode_gap),
        ("segment.window_len", seg.window_len),
    ] {
        if v <= 0.0 {
            push(key, "must be positive".into());
        }
    }
    if !config.features.n_fft.is_power_of_two() {
        push("features.n_fft", format!("{} is not a power of two", config.features.n_fft));
    }
    if config.features.hop == 0 {
        push("features.hop", "must be positive".into());
    }
    if config.features.n_mels == 0 {
        push("features.n_mels", "must be positive".into());
    }
    if !(config.features.fmin < config.features.fmax) {
        push("features.fmax", "must exceed features.fmin".into());
    }
    if !(0.0..=255.0).contains(&config.rgb_threshold) {
        push("features.rgb_threshold", "must lie in [0, 255]".into());
    }
    if let Err(e) = config.augment.validate() {
        push("augment", e.to_string());
    }
    if config.simclr.temperature <= 0.0 {
        push("simclr.temperature", "must be > 0".into());
    }
    if config.simclr.batch_pairs < 2 {
        push("simclr.batch_pairs", "must be >= 2".into());
    }
    if config.simclr.epochs == 0 {
        push("simclr.epochs", "must be >= 1".into());
    }
    if config.simclr.blocks.is_empty() {
        push("simclr.blocks", "need at least one block".into());
    }
    if config.simclr.embed_dim == 0 {
        push("simclr.embed_dim", "must be positive".into());
    }
    if optimizer_lr(&config.simclr.optimizer) <= 0.0 {
        push("simclr.learning_rate", "must be > 0".into());
    }
    if config.opencon.tau_con <= 0.0 {
        push("opencon.tau_con", "must be > 0".into());
    }
    if config.opencon.tau_proto <= 0.0 {
        push("opencon.tau_proto", "must be > 0".into());
    }
    if !(config.opencon.gamma > 0.0 && config.opencon.gamma < 1.0) {
        push("opencon.gamma", "must lie in (0, 1)".into());
    }
    if !(0.0..=100.0).contains(&config.opencon.lambda_percentile) {
        push("opencon.lambda_percentile", "must lie in [0, 100]".into());
    }
    if config.opencon.epochs == 0 {
        push("opencon.epochs", "must be >= 1".into());
    }
    if config.opencon.batch < 2 {
        push("opencon.batch", "must be >= 2".into());
    }
    if config.opencon.embed_view_noise < 0.0 {
        push("opencon.embed_view_noise", "must be >= 0".into());
    }
    if config.eval.n_models == 0 {
        push("eval.n_models", "must be >= 1".into());
    }
    if config.eval.n_subsets == 0 {
        push("eval.n_subsets", "must be >= 1".into());
    }
    if !(0.0 < config.eval.test_fraction && config.eval.test_fraction < 1.0) {
        push("eval.test_fraction", "must lie in (0, 1)".into());
    }
    if !(0.0 < config.eval.label_fraction && config.eval.label_fraction <= 1.0) {
        push("eval.label_fraction", "must lie in (0, 1]".into());
    }
    if config.synth.users_per_class < 2 {
        push("synth.users_per_class", "need >= 2 users per class for user splits".into());
    }
    if config.synth.instances_per_user == 0 {
        push("synth.instances_per_user", "must be >= 1".into());
    }
    if config.synth.sample_rate == 0 {
        push("synth.sample_rate", "must be positive".into());
    }
}

/// Dump every key at its current value in the config file format.
pub fn dump(config: &RunConfig) -> String {
    let mut out = String::new();
    let aug_mode = match config.augment.mode {
        AugmentMode::Ia => "ia",
        AugmentMode::Aa => "aa",
    };
    let ia_compose = match config.augment.ia_compose {
        IaCompose::Both => "both",
        IaCompose::OneOf => "one-of",
    };
    let blocks: Vec<String> = config.simclr.blocks.iter().map(|b| b.to_string()).collect();
    let _ = write!(
        out,
        "[segment]\n\
         rel_threshold = {}\n\
         min_event_dur = {}\n\
         intra_merge_gap = {}\n\
         frame_len = {}\n\
         hop = {}\n\
         episode_gap = {}\n\
         window_len = {}\n\
         slide_classes = {}\n\
         \n[features]\n\
         n_fft = {}\n\
         hop = {}\n\
         n_mels = {}\n\
         fmin = {}\n\
         fmax = {}\n\
         rgb_threshold = {}\n\
         \n[augment]\n\
         mode = {aug_mode}\n\
         crop_scale_min = {}\n\
         crop_scale_max = {}\n\
         crop_aspect_min = {}\n\
         crop_aspect_max = {}\n\
         blur_sigma_min = {}\n\
         blur_sigma_max = {}\n\
         pitch_min = {}\n\
         pitch_max = {}\n\
         rt60_min = {}\n\
         rt60_max = {}\n\
         wet_mix = {}\n\
         ia_compose = {ia_compose}\n\
         \n[simclr]\n\
         temperature = {}\n\
         batch_pairs = {}\n\
         epochs = {}\n\
         learning_rate = {}\n\
         blocks = {}\n\
         embed_dim = {}\n\
         keep_last_batch = {}\n\
         \n[opencon]\n\
         n_unknown = {}\n\
         tau_con = {}\n\
         tau_proto = {}\n\
         gamma = {}\n\
         lambda_percentile = {}\n\
         epochs = {}\n\
         batch = {}\n\
         finetune = {}\n\
         learning_rate = {}\n\
         embed_view_noise = {}\n\
         reseed_dead = {}\n\
         center_embeddings = {}\n\
         \n[eval]\n\
         n_models = {}\n\
         n_subsets = {}\n\
         test_fraction = {}\n\
         label_fraction = {}\n\
         resample_subsets = {}\n\
         \n[synth]\n\
         users_per_class = {}\n\
         instances_per_user = {}\n\
         sample_rate = {}\n\
         snr_db = {}\n",
        config.segment.rel_threshold,
        config.segment.min_event_dur,
        config.segment.intra_merge_gap,
        config.segment.frame_len,
        config.segment.hop,
        config.segment.episode_gap,
        config.segment.window_len,
        config.slide_classes.join(","),
        config.features.n_fft,
        config.features.hop,
        config.features.n_mels,
        config.features.fmin,
        config.features.fmax,
        config.rgb_threshold,
        config.augment.crop_scale_range.0,
        config.augment.crop_scale_range.1,
        config.augment.crop_aspect_range.0,
        config.augment.crop_aspect_range.1,
        config.augment.blur_sigma_range.0,
        config.augment.blur_sigma_range.1,
        config.augment.pitch_semitone_range.0,
        config.augment.pitch_semitone_range.1,
        config.augment.reverb_rt60_range.0,
        config.augment.reverb_rt60_range.1,
        config.augment.reverb_wet_mix,
        config.simclr.temperature,
        config.simclr.batch_pairs,
        config.simclr.epochs,
        optimizer_lr(&config.simclr.optimizer),
        blocks.join(","),
        config.simclr.embed_dim,
        config.simclr.keep_last_batch,
        config.opencon.n_unknown,
        config.opencon.tau_con,
        config.opencon.tau_proto,
        config.opencon.gamma,
        config.opencon.lambda_percentile,
        config.opencon.epochs,
        config.opencon.batch,
        config.opencon.finetune,
        optimizer_lr(&config.opencon.optimizer),
        config.opencon.embed_view_noise,
        config.opencon.reseed_dead,
        config.opencon.center_embeddings,
        config.eval.n_models,
        config.eval.n_subsets,
        config.eval.test_fraction,
        config.eval.label_fraction,
        config.eval.resample_subsets,
        config.synth.users_per_class,
        config.synth.instances_per_user,
        config.synth.sample_rate,
        config.synth.snr_db,
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let config = parse_config("").unwrap();
        assert_eq!(config, RunConfig::default());
    }

    #[test]
    fn dump_round_trips() {
        let config = RunConfig::default();
        let dumped = dump(&config);
        let parsed = parse_config(&dumped).unwrap();
        assert_eq!(parsed, config);
    }

    #[test]
    fn zero_temperature_names_the_key() {
        let errors = parse_config("[simclr]\ntemperature = 0\n").unwrap_err();
        assert!(errors.iter().any(|e| e.key == "simclr.temperature"), "{errors:?}");
    }

    #[test]
    fn two_violations_reported_together() {
        let errors = parse_config("[simclr]\ntemperature = 0\n[opencon]\ngamma = 1.5\n").unwrap_err();
        assert!(errors.len() >= 2, "{errors:?}");
        assert!(errors.iter().any(|e| e.key == "simclr.temperature"));
        assert!(errors.iter().any(|e| e.key == "opencon.gamma"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let errors = parse_config("[simclr]\nbogus = 1\n").unwrap_err();
        assert!(errors.iter().any(|e| e.message.contains("unknown key")));
        let errors = parse_config("[nonsense]\nx = 1\n").unwrap_err();
        assert!(errors.iter().any(|e| e.message.contains("unknown section")));
    }

    #[test]
    fn values_apply() {
        let config = parse_config(
            "[features]\nn_mels = 32\n[augment]\nmode = ia\n[simclr]\nblocks = 4, 8\n",
        )
        .unwrap();
        assert_eq!(config.features.n_mels, 32);
        assert_eq!(config.augment.mode, AugmentMode::Ia);
        assert_eq!(config.simclr.blocks, vec![4, 8]);
    }

    #[test]
    fn duplicate_keys_rejected() {
        let errors = parse_config("[simclr]\nepochs = 5\nepochs = 6\n").unwrap_err();
        assert!(errors.iter().any(|e| e.message.contains("twice")));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let config = parse_config("# top\n\n[simclr]\nepochs = 7 # inline\n").unwrap();
        assert_eq!(config.simclr.epochs, 7);
    }

    #[test]
    fn parser_never_panics_on_garbage() {
        let mut rng = oad_core::Rng::new(99);
        for _ in 0..500 {
            let len = rng.below(200);
            let bytes: Vec<u8> = (0..len).map(|_| rng.below(256) as u8).collect();
            let text = String::from_utf8_lossy(&bytes).into_owned();
            let _ = parse_config(&text);
        }
        // Structured-looking garbage too.
        for text in [
            "[",
            "]",
            "[x",
            "= 5",
            "a = ",
            "[segment]\nhop = -1e999",
            "[simclr]\nblocks = ,,",
            "\u{0}\u{1}",
        ] {
            let _ = parse_config(text);
        }
    }
}
