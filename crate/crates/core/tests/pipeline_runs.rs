//! End-to-end pipeline runs: stage caching and byte-level determinism.

use std::collections::BTreeMap;
use std::path::Path;

use forecastability::features::FeatureFamily;
use forecastability::forecast::{BacktestConfig, GbmParams};
use forecastability::pipeline::{
    run_all, InputSpec, PipelineConfig, RunManifest, SynthSpec, RUN_MANIFEST_FILE,
};
use forecastability::selector::{FeaturesPerSplit, GridSpec};

const STAGES: [&str; 4] = ["forecast", "features", "label", "classify"];

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

/// Relative path -> content hash for every file under `dir`, excluding
/// the run manifest (its timestamps are the one nondeterministic part).
fn hash_tree(dir: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, hashes: &mut BTreeMap<String, String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, hashes);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                if rel == RUN_MANIFEST_FILE {
                    continue;
                }
                let bytes = std::fs::read(&path).unwrap();
                hashes.insert(rel, forecastability::pipeline::hash_bytes(&bytes));
            }
        }
    }
    let mut hashes = BTreeMap::new();
    walk(dir, dir, &mut hashes);
    hashes
}

/// The stored manifest as JSON with every timestamp nulled.
fn manifest_without_timestamps(dir: &Path) -> serde_json::Value {
    let bytes = std::fs::read(dir.join(RUN_MANIFEST_FILE)).unwrap();
    let mut value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    value["completed_at"] = serde_json::Value::Null;
    for stage in value["stages"].as_array_mut().unwrap() {
        stage["completed_at"] = serde_json::Value::Null;
    }
    value
}

#[test]
fn fresh_run_records_four_uncached_stages() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let manifest = run_all(&config).unwrap();

    let names: Vec<&str> = manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, STAGES);
    assert!(manifest.stages.iter().all(|s| !s.cached));
    for stage in &manifest.stages {
        assert!(!stage.artifacts.is_empty(), "{} wrote nothing", stage.stage);
        for artifact in &stage.artifacts {
            assert!(
                dir.path().join(&artifact.path).is_file(),
                "missing {}",
                artifact.path
            );
        }
    }

    let stored = RunManifest::load(dir.path()).expect("manifest on disk");
    assert_eq!(stored.stages.len(), 4);
    assert_eq!(stored.config_hash, manifest.config_hash);
    assert_eq!(stored.corpus_hash, manifest.corpus_hash);
}

#[test]
fn rerun_with_same_config_reuses_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_all(&config).unwrap();
    let before = hash_tree(dir.path());

    let second = run_all(&config).unwrap();
    assert!(second.stages.iter().all(|s| s.cached), "all stages cached");
    assert_eq!(hash_tree(dir.path()), before, "artifacts untouched");
}

#[test]
fn grid_change_reruns_only_the_classify_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_all(&config).unwrap();

    let mut changed = config.clone();
    changed.grid.n_trees = vec![20];
    let manifest = run_all(&changed).unwrap();
    let cached: Vec<bool> = manifest.stages.iter().map(|s| s.cached).collect();
    assert_eq!(cached, [true, true, true, false]);
}

#[test]
fn backtest_change_reruns_forecast_label_and_classify() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_all(&config).unwrap();

    let mut changed = config.clone();
    changed.backtest.gbm.n_trees = 14;
    let manifest = run_all(&changed).unwrap();
    let by_name: BTreeMap<&str, bool> = manifest
        .stages
        .iter()
        .map(|s| (s.stage.as_str(), s.cached))
        .collect();
    assert!(!by_name["forecast"], "backtest knob feeds the forecast");
    assert!(by_name["features"], "features depend only on the corpus");
    assert!(!by_name["label"], "labels depend on the forecast");
    assert!(!by_name["classify"]);
}

#[test]
fn seed_change_invalidates_the_synthetic_corpus_and_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_all(&config).unwrap();

    let mut changed = config.clone();
    changed.seed = 6;
    let manifest = run_all(&changed).unwrap();
    assert!(manifest.stages.iter().all(|s| !s.cached));
}

#[test]
fn identical_configs_produce_identical_artifact_trees() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let mut config_a = small_config(dir_a.path());
    let mut config_b = small_config(dir_b.path());
    // The output directory is part of the config but must not leak into
    // any artifact byte.
    config_a.out_dir = dir_a.path().to_path_buf();
    config_b.out_dir = dir_b.path().to_path_buf();
    run_all(&config_a).unwrap();
    run_all(&config_b).unwrap();

    assert_eq!(hash_tree(dir_a.path()), hash_tree(dir_b.path()));

    let mut manifest_a = manifest_without_timestamps(dir_a.path());
    let manifest_b = manifest_without_timestamps(dir_b.path());
    // The config hash covers out_dir, which differs between the runs;
    // everything else must match exactly.
    manifest_a["config_hash"] = manifest_b["config_hash"].clone();
    assert_eq!(manifest_a, manifest_b);
}
