//! Binary-level tests: subcommand wiring, exit codes, artifact layout.

use std::path::{Path, PathBuf};
use std::process::Output;

use forecastability::features::FeatureFamily;
use forecastability::forecast::{BacktestConfig, GbmParams};
use forecastability::pipeline::{
    InputSpec, PipelineConfig, RunManifest, SynthSpec, RUN_MANIFEST_FILE,
};
use forecastability::selector::{FeaturesPerSplit, GridSpec};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_forecastability")
}

fn small_config(out: &Path) -> PipelineConfig {
    PipelineConfig {
        input: InputSpec::Synthetic(SynthSpec {
            n_buildings: 8,
            mix: [1, 1, 1],
            noise: 1.0,
            weeks: 8,
        }),
        backtest: BacktestConfig {
            gbm: GbmParams {
                n_trees: 12,
                learning_rate: 0.3,
                max_leaves: 8,
                min_samples_leaf: 10,
                seed: 0,
            },
            ..BacktestConfig::default()
        },
        grid: GridSpec {
            n_trees: vec![15],
            max_depth: vec![Some(4)],
            min_samples_leaf: vec![1],
            features_per_split: vec![FeaturesPerSplit::Sqrt],
        },
        cv_folds: 2,
        families: FeatureFamily::ALL.to_vec(),
        seed: 5,
        out_dir: out.to_path_buf(),
    }
}

fn write_config(dir: &Path, config: &PipelineConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    path
}

fn run(config: &Path, args: &[&str]) -> Output {
    std::process::Command::new(bin())
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn each_subcommand_runs_one_stage_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("artifacts");
    let config = write_config(dir.path(), &small_config(&out));

    assert_exit(&run(&config, &["synth"]), 0);
    assert!(out.join("corpus/manifest.json").is_file());

    assert_exit(&run(&config, &["forecast", "--jobs", "1"]), 0);
    assert!(out.join("forecast/scores.csv").is_file());

    assert_exit(&run(&config, &["features"]), 0);
    assert!(out.join("features/combined.csv").is_file());

    assert_exit(&run(&config, &["label"]), 0);
    assert!(out.join("labels/labels.json").is_file());

    assert_exit(&run(&config, &["classify", "--family", "combined"]), 0);
    assert!(out.join("classify/combined_model.json").is_file());
    assert!(!out.join("classify/informed_model.json").exists());
}

#[test]
fn run_subcommand_is_cached_on_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("artifacts");
    let config = write_config(dir.path(), &small_config(&out));

    assert_exit(&run(&config, &["run"]), 0);
    let manifest: RunManifest =
        serde_json::from_slice(&std::fs::read(out.join(RUN_MANIFEST_FILE)).unwrap()).unwrap();
    assert!(manifest.stages.iter().all(|s| !s.cached));

    let second = run(&config, &["run"]);
    assert_exit(&second, 0);
    let manifest: RunManifest =
        serde_json::from_slice(&std::fs::read(out.join(RUN_MANIFEST_FILE)).unwrap()).unwrap();
    assert!(manifest.stages.iter().all(|s| s.cached));
    assert_eq!(
        String::from_utf8_lossy(&second.stdout).matches("cached").count(),
        4
    );
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("artifacts");
    let config = write_config(dir.path(), &small_config(&out));

    assert_exit(&run(&config, &["synth"]), 0);
    let first = std::fs::read(out.join("corpus/corpus_hash.json")).unwrap();
    assert_exit(&run(&config, &["synth", "--seed", "6"]), 0);
    let second = std::fs::read(out.join("corpus/corpus_hash.json")).unwrap();
    assert_ne!(first, second);
}

#[test]
fn stage_without_upstream_artifacts_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("artifacts");
    let config = write_config(dir.path(), &small_config(&out));

    assert_exit(&run(&config, &["forecast"]), 3);
    assert_exit(&run(&config, &["label"]), 3);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("artifacts");

    let unknown_key = dir.path().join("bad.json");
    std::fs::write(&unknown_key, b"{\"bogus\": 1}\n").unwrap();
    let output = run(&unknown_key, &["run"]);
    assert_exit(&output, 2);
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error:"));

    let missing = dir.path().join("absent.json");
    assert_exit(&run(&missing, &["run"]), 2);

    let synthetic = write_config(dir.path(), &small_config(&out));
    assert_exit(&run(&synthetic, &["ingest"]), 2);

    let mut invalid = small_config(&out);
    invalid.cv_folds = 1;
    let invalid = write_config(dir.path(), &invalid);
    assert_exit(&run(&invalid, &["synth"]), 2);
}
