use std::path::{Path, PathBuf};
use std::process::Command;

use acnn_pipeline::{commands, PipelineConfig};

const FAST: [&str; 3] = ["operators.orientations=4", "operators.eigen_count=60", "training.steps=20"];

fn fixture() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let config = commands::synth(7, dir.path()).unwrap();
    (dir, config)
}

fn load(config: &Path, extra: &[&str]) -> PipelineConfig {
    let overrides: Vec<String> = FAST.iter().chain(extra).map(|s| s.to_string()).collect();
    PipelineConfig::load(config, &overrides).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|d| d.map(|e| e.unwrap().path()).collect())
        .unwrap_or_default();
    out.sort();
    out
}

#[test]
fn warm_precompute_does_no_eigendecompositions() {
    let (_dir, path) = fixture();
    let config = load(&path, &[]);
    let cold = commands::precompute(&config).unwrap();
    assert!(cold.eigendecompositions > 0);
    let warm = commands::precompute(&config).unwrap();
    assert_eq!(warm.eigendecompositions, 0);
    assert_eq!(warm.rebuilt_corrupt, 0);
}

#[test]
fn alpha_change_reuses_frames() {
    let (_dir, path) = fixture();
    let config = load(&path, &[]);
    commands::precompute(&config).unwrap();
    let cache = config.cache_path();
    let frames = files(&cache.join("frames"));
    let operators = files(&cache.join("operators")).len();

    let changed = load(&path, &["operators.alpha=10.0"]);
    let report = commands::precompute(&changed).unwrap();
    assert_eq!(files(&cache.join("frames")), frames);
    assert_eq!(files(&cache.join("operators")).len(), 2 * operators);
    // Only the anisotropic bases are rebuilt; the isotropic ones are reused.
    assert_eq!(report.eigendecompositions, 2 * 4);
}

#[test]
fn corrupt_cache_entry_is_rebuilt() {
    let (_dir, path) = fixture();
    let config = load(&path, &[]);
    commands::precompute(&config).unwrap();
    let victim = files(&config.cache_path().join("bases")).remove(0);
    let bytes = std::fs::read(&victim).unwrap();
    std::fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
    let report = commands::precompute(&config).unwrap();
    assert_eq!(report.rebuilt_corrupt, 1);
    assert_eq!(report.eigendecompositions, 1);
    assert_eq!(std::fs::read(&victim).unwrap(), bytes);
}

#[test]
fn inference_is_reproducible_from_checkpoint() {
    let (_dir, path) = fixture();
    let config = load(&path, &[]);
    commands::train(&config).unwrap();
    let first = commands::infer(&config, None, &[], false).unwrap();
    let map = std::fs::read(&first[0]).unwrap();
    let again = commands::infer(&config, None, &[], false).unwrap();
    assert_eq!(std::fs::read(&again[0]).unwrap(), map);
}

fn acnn(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_acnn"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

#[test]
fn missing_checkpoint_is_a_user_error() {
    let (dir, path) = fixture();
    let missing = dir.path().join("nowhere.ckpt");
    let out = acnn(&["infer", "-c", path.to_str().unwrap(), "--checkpoint", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.ckpt"));
}

#[test]
fn bad_architecture_is_a_user_error() {
    let (_dir, path) = fixture();
    let out = acnn(&["train", "-c", path.to_str().unwrap(), "--set", "network.architecture=\"IC16+XY3\""]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_user_error() {
    assert_eq!(acnn(&["frobnicate"]).status.code(), Some(2));
}
