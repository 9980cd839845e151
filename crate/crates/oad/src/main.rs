//! `oad`: the open-set audio pattern discovery pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use oad::config::{self, RunConfig};
use oad::pipeline::{self, CliError};
use oad::ThreadExec;

#[derive(Parser, Debug)]
#[command(
    name = "oad",
    version,
    about = "Open-set audio pattern discovery: segment cough/breath audio, featurize, \
             pre-train contrastively, and discover novel classes with prototypes"
)]
struct Cli {
    /// Run-config file; CLI flags override file values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads. Results are byte-identical for every value.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Master seed (falls back to $OAD_SEED, then 0).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled audio dataset plus its manifest.
    Synth {
        /// Extra config file applied on top of --config (synth section).
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Detect cough events / slide breath windows and emit 0.5 s windows.
    Segment {
        #[arg(long, value_name = "CSV")]
        manifest: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Log-Mel featurize windows, render images, filter by mean RGB.
    Featurize {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Keep windows whose image mean RGB is at least this value.
        #[arg(long, value_name = "VALUE")]
        rgb_threshold: Option<f64>,
    },
    /// Write both stochastic views of one window for inspection.
    AugmentPreview {
        #[arg(long, value_name = "WAV")]
        window: PathBuf,
        /// Augmentation order: image-first (ia) or audio-first (aa).
        #[arg(long)]
        mode: String,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Contrastive pre-training over a window manifest.
    Pretrain {
        #[arg(long, value_name = "CSV")]
        manifest: PathBuf,
        /// Augmentation order: image-first (ia) or audio-first (aa).
        #[arg(long)]
        mode: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Override the configured epoch count.
        #[arg(long, value_name = "N")]
        epochs: Option<usize>,
        /// IA method composition per view: both, or one-of.
        #[arg(long, value_name = "MODE")]
        ia_compose: Option<String>,
        /// Train on an incomplete final batch instead of dropping it.
        #[arg(long)]
        keep_last_batch: bool,
    },
    /// Open-world discovery from a pre-trained encoder.
    Discover {
        #[arg(long, value_name = "CLPD")]
        pretrained: PathBuf,
        #[arg(long, value_name = "CSV")]
        manifest: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Freeze the encoder (ablation mode).
        #[arg(long)]
        frozen: bool,
    },
    /// The n-models x n-subsets trial protocol with report emission.
    Evaluate {
        #[arg(long, value_name = "CLPD")]
        pretrained: PathBuf,
        #[arg(long, value_name = "CSV")]
        manifest: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of discovery models trained with distinct seeds.
        #[arg(long, value_name = "N")]
        models: Option<usize>,
        /// Number of random user-respecting test subsets per model.
        #[arg(long, value_name = "N")]
        subsets: Option<usize>,
        /// Resample test users per subset instead of partitioning them.
        #[arg(long)]
        resample_subsets: bool,
    },
    /// Print every configuration default in config-file form.
    Defaults,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut merged = String::new();
    for path in [&cli.config, &spec_path(cli)].into_iter().flatten() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        merged.push_str(&text);
        merged.push('\n');
    }
    config::parse_config(&merged).map_err(|errors| {
        let mut msg = String::from("invalid configuration:\n");
        for e in &errors {
            msg.push_str(&format!("  {e}\n"));
        }
        CliError::Data(msg.trim_end().to_string())
    })
}

fn spec_path(cli: &Cli) -> Option<PathBuf> {
    match &cli.command {
        Command::Synth { spec, .. } => spec.clone(),
        _ => None,
    }
}

fn resolve_seed(cli: &Cli) -> Result<u64, CliError> {
    if let Some(seed) = cli.seed {
        return Ok(seed);
    }
    match std::env::var("OAD_SEED") {
        Ok(text) => text
            .parse()
            .map_err(|_| CliError::Usage(format!("OAD_SEED must be an integer, got '{text}'"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli)?;
    let seed = resolve_seed(&cli)?;
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(Into::into).unwrap_or(1));
    if threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let exec = ThreadExec::new(threads);

    match &cli.command {
        Command::Synth { out, .. } => pipeline::cmd_synth(&config, seed, out),
        Command::Segment { manifest, out } => {
            let manifest = pipeline::resolve_manifest_arg(manifest)?;
            pipeline::cmd_segment(&config, &manifest, out, &exec)
        }
        Command::Featurize { input, out, rgb_threshold } => {
            pipeline::cmd_featurize(&config, input, out, *rgb_threshold, &exec)
        }
        Command::AugmentPreview { window, mode, out } => {
            let mode = pipeline::parse_mode(mode)?;
            pipeline::cmd_augment_preview(&config, window, mode, seed, out)
        }
        Command::Pretrain { manifest, mode, out, epochs, ia_compose, keep_last_batch } => {
            let mut config = config;
            if let Some(compose) = ia_compose {
                config.augment.ia_compose = match compose.as_str() {
                    "both" => oad_core::augment::IaCompose::Both,
                    "one-of" => oad_core::augment::IaCompose::OneOf,
                    other => {
                        return Err(CliError::Usage(format!(
                            "--ia-compose must be 'both' or 'one-of', got '{other}'"
                        )))
                    }
                };
            }
            if *keep_last_batch {
                config.simclr.keep_last_batch = true;
            }
            let mode = pipeline::parse_mode(mode)?;
            let manifest = pipeline::resolve_manifest_arg(manifest)?;
            pipeline::cmd_pretrain(&config, &manifest, mode, out, seed, *epochs, &exec)
        }
        Command::Discover { pretrained, manifest, out, frozen } => {
            let manifest = pipeline::resolve_manifest_arg(manifest)?;
            pipeline::cmd_discover(&config, pretrained, &manifest, out, seed, *frozen, &exec)
        }
        Command::Evaluate { pretrained, manifest, out, models, subsets, resample_subsets } => {
            let mut config = config;
            if *resample_subsets {
                config.eval.resample_subsets = true;
            }
            let manifest = pipeline::resolve_manifest_arg(manifest)?;
            pipeline::cmd_evaluate(
                &config, pretrained, &manifest, out, *models, *subsets, seed, &exec,
            )
        }
        Command::Defaults => {
            print!("{}", config::dump(&config));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let command = Cli::command().after_help(
        "Configuration defaults (also available via `oad defaults`):\n\n".to_string()
            + &config::dump(&RunConfig::default()),
    );
    let cli = match command.try_get_matches() {
        Ok(matches) => match Cli::from_arg_matches(&matches) {
            Ok(cli) => cli,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
        },
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // Usage errors (unknown flags/subcommands, missing values).
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oad: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
