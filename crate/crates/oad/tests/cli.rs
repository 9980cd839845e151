//! CLI behavior: exit-code taxonomy, config validation, help/defaults
//! output, and the augment-preview artifacts.

use std::path::PathBuf;
use std::process::Command;

fn oad() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oad"))
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("oad-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn help_exits_zero_and_documents_defaults() {
    let out = oad().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in [
        "synth",
        "segment",
        "featurize",
        "augment-preview",
        "pretrain",
        "discover",
        "evaluate",
        "defaults",
        // Spot-check that numeric defaults are in the help text.
        "rel_threshold = 0.1",
        "temperature = 0.5",
        "batch_pairs = 64",
        "gamma = 0.9",
        "lambda_percentile = 10",
        "rgb_threshold = 70",
        "n_models = 5",
        "n_subsets = 10",
    ] {
        assert!(text.contains(needle), "--help missing: {needle}");
    }
}

#[test]
fn unknown_flag_exits_one_and_names_it() {
    let out = oad().args(["defaults", "--bogus-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--bogus-flag"), "stderr should name the flag: {err}");
}

#[test]
fn unknown_subcommand_exits_one() {
    let out = oad().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_is_a_data_error() {
    let out = oad()
        .args(["segment", "--manifest", "/nonexistent/manifest.csv", "--out", "/tmp/oad-nowhere"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_violations_exit_two_and_list_every_key() {
    let dir = temp_dir("badcfg");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "[simclr]\ntemperature = 0\n[opencon]\ngamma = 1.5\n").unwrap();
    let out =
        oad().args(["defaults", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("simclr.temperature"), "{err}");
    assert!(err.contains("opencon.gamma"), "{err}");
}

#[test]
fn malformed_config_never_panics() {
    let dir = temp_dir("fuzzcfg");
    for (i, garbage) in [
        "[", "]", "[segment", "= 5", "a = ", "\u{0}\u{1}\u{2}", "[simclr]\nblocks = ,,,",
        "[synth]\nsample_rate = -1",
    ]
    .iter()
    .enumerate()
    {
        let cfg = dir.join(format!("fuzz{i}.cfg"));
        std::fs::write(&cfg, garbage).unwrap();
        let out = oad().args(["defaults", "--config", cfg.to_str().unwrap()]).output().unwrap();
        // Must exit with a code (2 for bad config), never crash.
        assert!(
            matches!(out.status.code(), Some(0) | Some(2)),
            "case {i}: status {:?}",
            out.status
        );
    }
}

#[test]
fn defaults_dump_round_trips_through_the_parser() {
    let out = oad().arg("defaults").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let dump = String::from_utf8(out.stdout).unwrap();
    let dir = temp_dir("defaults");
    let cfg = dir.join("dump.cfg");
    std::fs::write(&cfg, &dump).unwrap();
    let again = oad().args(["defaults", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(dump, String::from_utf8(again.stdout).unwrap());
}

#[test]
fn bad_env_seed_is_a_usage_error() {
    let out = oad().arg("defaults").env("OAD_SEED", "not-a-number").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // A valid OAD_SEED is accepted.
    let out = oad().arg("defaults").env("OAD_SEED", "42").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn augment_preview_writes_both_views() {
    let dir = temp_dir("preview");
    // One synthetic window via the synth + segment stages.
    let synth = dir.join("synth");
    let windows = dir.join("windows");
    let cfg = dir.join("small.cfg");
    std::fs::write(&cfg, "[synth]\nusers_per_class = 2\ninstances_per_user = 1\n").unwrap();
    let run = |args: &[&str]| {
        let out = oad().args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&[
        "synth", "--out", synth.to_str().unwrap(), "--seed", "3", "--config",
        cfg.to_str().unwrap(),
    ]);
    run(&[
        "segment", "--manifest",
        synth.join("manifest.csv").to_str().unwrap(), "--out", windows.to_str().unwrap(),
    ]);
    let window = windows.join("win_000000.wav");
    assert!(window.exists());

    for mode in ["ia", "aa"] {
        let out_dir = dir.join(format!("view-{mode}"));
        run(&[
            "augment-preview", "--window", window.to_str().unwrap(), "--mode", mode, "--seed",
            "9", "--out", out_dir.to_str().unwrap(),
        ]);
        assert!(out_dir.join("view_a.ppm").exists());
        assert!(out_dir.join("view_b.ppm").exists());
        if mode == "aa" {
            assert!(out_dir.join("view_a.mels").exists());
            assert!(out_dir.join("view_b.mels").exists());
        }
        // The two views must differ.
        let a = std::fs::read(out_dir.join("view_a.ppm")).unwrap();
        let b = std::fs::read(out_dir.join("view_b.ppm")).unwrap();
        assert_ne!(a, b, "{mode}: views identical");
    }
}

#[test]
fn zero_threads_is_a_usage_error() {
    let out = oad().args(["defaults", "--threads", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
