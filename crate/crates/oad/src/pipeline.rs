//! Command implementations behind the CLI: each stage reads files,
//! delegates the computation to `oad-core`, and writes the artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use oad_core::augment::{self, AugmentMode, ViewPair};
use oad_core::eval::{self, ClassMap, Manifest, TrialConfig, TrialData};
use oad_core::features::{self, SparseFilterbank};
use oad_core::nn::checkpoint::Checkpoint;
use oad_core::nn::{Record, RecordData};
use oad_core::opencon::{self, DiscoverData, SplitDecision};
use oad_core::segment::{self, Window};
use oad_core::simclr;
use oad_core::synth;
use oad_core::Executor;

use crate::config::RunConfig;
use crate::csvio;
use crate::formats;
use crate::manifest_io::{self, WindowIndexRow};
use crate::report;
use crate::wav;

/// Errors mapped onto the CLI exit-code taxonomy: usage 1, data 2,
/// numeric 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<oad_core::Error> for CliError {
    fn from(e: oad_core::Error) -> Self {
        match e {
            oad_core::Error::NonFinite(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

macro_rules! data_error_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error_from!(
    wav::WavError,
    formats::FormatError,
    manifest_io::ManifestError,
    report::ReportError,
    std::io::Error
);

type Result<T> = std::result::Result<T, CliError>;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

// ---------------------------------------------------------------- synth

pub fn cmd_synth(config: &RunConfig, seed: u64, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let spec = config.synth.to_spec(seed);
    let (clips, mut manifest) = synth::synth_dataset(&spec)?;
    for (clip, row) in clips.iter().zip(manifest.rows.iter_mut()) {
        let path = out_dir.join(format!("{}.wav", clip.id));
        wav::write_audio(&path, &clip.clip)?;
        row.path = format!("{}.wav", clip.id); // relative to the manifest
    }
    manifest_io::write_manifest(&out_dir.join("manifest.csv"), &manifest)?;
    println!(
        "synth: wrote {} clips across {} classes to {}",
        clips.len(),
        spec.classes.len(),
        out_dir.display()
    );
    Ok(())
}

// -------------------------------------------------------------- segment

pub fn cmd_segment<E: Executor>(
    config: &RunConfig,
    manifest_path: &Path,
    out_dir: &Path,
    exec: &E,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let manifest = manifest_io::read_manifest(manifest_path)?;
    if manifest.rows.is_empty() {
        return Err(CliError::Data(format!("{}: empty manifest", manifest_path.display())));
    }
    let params = &config.segment;

    // Windows per source clip, computed in parallel, written in order.
    let results: Vec<Result<Vec<Window>>> = exec.map(manifest.rows.len(), |i| {
        let row = &manifest.rows[i];
        let clip = wav::load_audio(Path::new(&row.path))?;
        let is_slide = config.slide_classes.iter().any(|c| c == row.class.as_str());
        let mut windows = Vec::new();
        if is_slide {
            windows.extend(segment::slide_windows(&clip, &row.path, params.window_len));
        } else {
            let events = segment::extract_events(&clip, params)?;
            for event in &events {
                let samples = &clip.samples[event.start_sample..event.end_sample];
                windows.push(segment::standardize_window(
                    samples,
                    clip.sample_rate,
                    params.window_len,
                    (row.path.clone(), event.start_sample),
                )?);
            }
        }
        for w in windows.iter_mut() {
            w.class_label = Some(row.class.clone());
            w.user_id = Some(row.user_id.clone());
        }
        Ok(windows)
    });

    let mut index = Vec::new();
    let mut total = 0usize;
    for (i, result) in results.into_iter().enumerate() {
        let row = &manifest.rows[i];
        for window in result? {
            let name = format!("win_{total:06}.wav");
            let clip =
                segment::AudioClip { samples: window.samples.clone(), sample_rate: window.sample_rate };
            wav::write_audio(&out_dir.join(&name), &clip)?;
            index.push(WindowIndexRow {
                window_path: name,
                source_path: row.path.clone(),
                class: row.class.clone(),
                user_id: row.user_id.clone(),
                start_sample: window.source_ref.1,
                image_path: String::new(),
                mels_path: String::new(),
                mean_rgb: None,
            });
            total += 1;
        }
    }
    if total == 0 {
        return Err(CliError::Data("segmentation produced no windows".into()));
    }
    manifest_io::write_window_index(&out_dir.join("index.csv"), &index, false)?;
    println!(
        "segment: {} source clips -> {} windows ({})",
        manifest.rows.len(),
        total,
        out_dir.display()
    );
    Ok(())
}

// ------------------------------------------------------------ featurize

pub fn cmd_featurize<E: Executor>(
    config: &RunConfig,
    in_dir: &Path,
    out_dir: &Path,
    rgb_threshold: Option<f64>,
    exec: &E,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let threshold = rgb_threshold.unwrap_or(config.rgb_threshold);
    let index_path = in_dir.join("index.csv");
    let rows = manifest_io::read_window_index(&index_path)?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no windows listed", index_path.display())));
    }
    let params = &config.features;
    let first = wav::load_audio(Path::new(&rows[0].window_path))?;
    let fb = SparseFilterbank::from_dense(&features::mel_filterbank(first.sample_rate, params)?);
    let colormap = features::default_colormap();

    struct Featurized {
        spec: features::MelSpectrogram,
        image: features::SpectrogramImage,
        mean: f64,
    }
    let results: Vec<Result<Featurized>> = exec.map(rows.len(), |i| {
        let clip = wav::load_audio(Path::new(&rows[i].window_path))?;
        let spec = features::log_mel_with(&clip.samples, clip.sample_rate, params, &fb)?;
        let image = features::render_image(&spec, &colormap)?;
        let mean = features::mean_rgb(&image);
        Ok(Featurized { spec, image, mean })
    });

    let mut kept = Vec::new();
    let mut dropped = 0usize;
    for (i, result) in results.into_iter().enumerate() {
        let f = result?;
        if f.mean < threshold {
            dropped += 1;
            continue;
        }
        let stem = format!("spec_{i:06}");
        let image_path = format!("{stem}.ppm");
        let mels_path = format!("{stem}.mels");
        formats::write_ppm(&out_dir.join(&image_path), &f.image)?;
        formats::write_mels(&out_dir.join(&mels_path), &f.spec)?;
        let mut row = rows[i].clone();
        row.image_path = image_path;
        row.mels_path = mels_path;
        row.mean_rgb = Some(f.mean);
        kept.push(row);
    }
    if kept.is_empty() {
        return Err(CliError::Data(format!(
            "all {} windows fell below the RGB threshold {threshold}",
            rows.len()
        )));
    }
    manifest_io::write_window_index(&out_dir.join("index.csv"), &kept, true)?;
    println!(
        "featurize: kept {} of {} windows (dropped {} below mean RGB {threshold})",
        kept.len(),
        rows.len(),
        dropped
    );
    Ok(())
}

// ------------------------------------------------------- augment-preview

pub fn cmd_augment_preview(
    config: &RunConfig,
    window_path: &Path,
    mode: AugmentMode,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let clip = wav::load_audio(window_path)?;
    let window = Window {
        samples: clip.samples,
        sample_rate: clip.sample_rate,
        source_ref: (window_path.display().to_string(), 0),
        class_label: None,
        user_id: None,
    };
    let params = &config.features;
    let fb = SparseFilterbank::from_dense(&features::mel_filterbank(window.sample_rate, params)?);
    let colormap = features::default_colormap();
    let aug = oad_core::augment::AugmentConfig { mode, ..config.augment.clone() };
    let pair = augment::make_view_pair(
        &window,
        &aug,
        params,
        &fb,
        &colormap,
        &mut augment::view_rng(seed, 0, 0, 0),
        &mut augment::view_rng(seed, 0, 0, 1),
    )?;
    match pair {
        ViewPair::Images(a, b) => {
            formats::write_ppm(&out_dir.join("view_a.ppm"), &a)?;
            formats::write_ppm(&out_dir.join("view_b.ppm"), &b)?;
        }
        ViewPair::Spectrograms(a, b) => {
            formats::write_mels(&out_dir.join("view_a.mels"), &a)?;
            formats::write_mels(&out_dir.join("view_b.mels"), &b)?;
            formats::write_ppm(&out_dir.join("view_a.ppm"), &features::render_image(&a, &colormap)?)?;
            formats::write_ppm(&out_dir.join("view_b.ppm"), &features::render_image(&b, &colormap)?)?;
        }
    }
    println!("augment-preview: wrote both views to {}", out_dir.display());
    Ok(())
}

// ------------------------------------------------------------- pretrain

/// Load every manifest row as a standard window.
fn load_windows(manifest: &Manifest) -> Result<Vec<Window>> {
    manifest
        .rows
        .iter()
        .map(|row| {
            let clip = wav::load_audio(Path::new(&row.path))?;
            Ok(Window {
                samples: clip.samples,
                sample_rate: clip.sample_rate,
                source_ref: (row.path.clone(), 0),
                class_label: Some(row.class.clone()),
                user_id: Some(row.user_id.clone()),
            })
        })
        .collect()
}

pub fn cmd_pretrain<E: Executor>(
    config: &RunConfig,
    manifest_path: &Path,
    mode: AugmentMode,
    out_path: &Path,
    seed: u64,
    epochs: Option<usize>,
    exec: &E,
) -> Result<()> {
    let manifest = manifest_io::read_manifest(manifest_path)?;
    let windows = load_windows(&manifest)?;
    let mut cfg = config.simclr.clone();
    cfg.seed = seed;
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    let aug = oad_core::augment::AugmentConfig { mode, ..config.augment.clone() };
    let output = simclr::pretrain(&windows, &cfg, &aug, &config.features, exec)?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    formats::save_checkpoint(out_path, &output.checkpoint)?;

    let mut curve = String::new();
    csvio::write_row(&mut curve, &["epoch", "step", "loss"]);
    for point in &output.loss_curve {
        csvio::write_row(
            &mut curve,
            &[&point.epoch.to_string(), &point.step.to_string(), &format!("{:.6}", point.loss)],
        );
    }
    let curve_path = out_path.with_extension("loss.csv");
    fs::write(&curve_path, curve)?;
    let last = output.loss_curve.last().map(|p| p.loss).unwrap_or(f64::NAN);
    println!(
        "pretrain: {} windows, {} steps, final loss {last:.4} -> {}",
        windows.len(),
        output.loss_curve.len(),
        out_path.display()
    );
    Ok(())
}

// ------------------------------------------------------------- discover

fn split_name(split: SplitDecision) -> &'static str {
    match split {
        SplitDecision::Labeled => "labeled",
        SplitDecision::KnownCandidate => "known",
        SplitDecision::NovelCandidate => "novel",
    }
}

pub fn cmd_discover<E: Executor>(
    config: &RunConfig,
    pretrained_path: &Path,
    manifest_path: &Path,
    out_dir: &Path,
    seed: u64,
    frozen: bool,
    exec: &E,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let checkpoint = formats::load_checkpoint(pretrained_path)?;
    let manifest = manifest_io::read_manifest(manifest_path)?;
    let windows = load_windows(&manifest)?;
    let class_map = ClassMap::from_rows(&manifest.rows);
    if class_map.n_known() == 0 {
        return Err(CliError::Data("manifest has no known-class instances".into()));
    }
    let labels =
        eval::mask_labels(&manifest.rows, &class_map, config.eval.label_fraction, seed)?;

    let mut cfg = config.opencon.clone();
    cfg.n_known = class_map.n_known();
    cfg.n_unknown = class_map.n_unknown();
    cfg.seed = seed;
    if frozen {
        cfg.finetune = false;
    }
    let output = opencon::discover(
        Some(&checkpoint),
        DiscoverData::Windows(&windows),
        &labels,
        &cfg,
        &config.augment,
        exec,
    )?;

    formats::save_checkpoint(&out_dir.join("model.clpd"), output.checkpoint.as_ref().unwrap())?;
    let protos = &output.prototypes;
    let proto_ckpt = Checkpoint {
        version: oad_core::nn::checkpoint::CHECKPOINT_VERSION,
        config_text: format!("prototypes: {} known + {} unknown\n", protos.n_known, protos.n_unknown),
        params: vec![Record {
            name: "prototypes.mu".into(),
            dims: vec![protos.n_classes(), protos.dim],
            data: RecordData::F32(protos.mu.clone()),
        }],
        opt: vec![],
        rng: vec![],
    };
    formats::save_checkpoint(&out_dir.join("prototypes.clpd"), &proto_ckpt)?;

    let mut out = String::new();
    csvio::write_row(
        &mut out,
        &["instance_id", "predicted_class", "split_decision", "true_class_for_eval"],
    );
    for assignment in &output.assignments {
        let row = &manifest.rows[assignment.instance];
        let predicted = class_map
            .name_of(assignment.predicted)
            .map(|c| c.as_str().to_string())
            .unwrap_or_else(|| format!("class{}", assignment.predicted));
        csvio::write_row(
            &mut out,
            &[&row.path, &predicted, split_name(assignment.split), row.class.as_str()],
        );
    }
    fs::write(out_dir.join("assignments.csv"), out)?;
    println!(
        "discover: {} instances assigned ({} epochs, final lambda {:.4}) -> {}",
        output.assignments.len(),
        cfg.epochs,
        output.lambda_history.last().unwrap(),
        out_dir.display()
    );
    Ok(())
}

// ------------------------------------------------------------- evaluate

pub fn cmd_evaluate<E: Executor>(
    config: &RunConfig,
    pretrained_path: &Path,
    manifest_path: &Path,
    out_dir: &Path,
    n_models: Option<usize>,
    n_subsets: Option<usize>,
    master_seed: u64,
    exec: &E,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let checkpoint = formats::load_checkpoint(pretrained_path)?;
    let manifest = manifest_io::read_manifest(manifest_path)?;
    let windows = load_windows(&manifest)?;

    let trial = TrialConfig {
        n_models: n_models.unwrap_or(config.eval.n_models),
        n_subsets: n_subsets.unwrap_or(config.eval.n_subsets),
        test_fraction: config.eval.test_fraction,
        label_fraction: config.eval.label_fraction,
        resample_subsets: config.eval.resample_subsets,
        master_seed,
        opencon: config.opencon.clone(),
        augment: config.augment.clone(),
    };
    let report_data = eval::run_trials(
        Some(&checkpoint),
        &manifest,
        TrialData::Windows(&windows),
        &trial,
        exec,
    )?;
    report::emit_report(out_dir, &report_data)?;
    println!(
        "evaluate: {} models x {} subsets -> {} rows ({})",
        trial.n_models,
        trial.n_subsets,
        report_data.rows.len(),
        out_dir.display()
    );
    for row in &report_data.summary {
        let name = report_data
            .class_map
            .name_of(row.class_index)
            .map(|c| c.as_str().to_string())
            .unwrap_or_default();
        println!(
            "  {:8} mean {:.3} +- {:.3} (q1 {:.3}, median {:.3}, q3 {:.3})",
            name, row.mean, row.std, row.q1, row.median, row.q3
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- misc

/// Relabel window paths in a manifest file for chained stages.
pub fn resolve_manifest_arg(path: &Path) -> Result<PathBuf> {
    if path.is_dir() {
        // Accept a stage output directory: use its index or manifest.
        for name in ["index.csv", "manifest.csv"] {
            let candidate = path.join(name);
            if candidate.exists() {
                return Ok(candidate);
            }
        }
        return Err(CliError::Usage(format!(
            "{} is a directory without index.csv or manifest.csv",
            path.display()
        )));
    }
    Ok(path.to_path_buf())
}

/// Parse an augmentation-mode CLI value.
pub fn parse_mode(value: &str) -> Result<AugmentMode> {
    match value {
        "ia" => Ok(AugmentMode::Ia),
        "aa" => Ok(AugmentMode::Aa),
        other => Err(CliError::Usage(format!("mode must be 'ia' or 'aa', got '{other}'"))),
    }
}
