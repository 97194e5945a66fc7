//! The run manifest: per-stage input hashes and artifact checksums.
//!
//! A stage is reusable when its input hash matches the previous run's
//! record and every recorded artifact still exists with the recorded
//! checksum. Hashes are SHA-256 over canonical JSON (struct fields in
//! declaration order, maps in key order), so they are stable across
//! runs and platforms.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::ingest::atomic_write;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const RUN_MANIFEST_VERSION: u32 = 1;

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hash of any serializable value via its canonical JSON form.
pub fn hash_value<T: Serialize>(value: &T) -> Result<String, PipelineError> {
    Ok(hash_bytes(&serde_json::to_vec(value)?))
}

pub fn hash_file(path: &Path) -> Result<String, PipelineError> {
    Ok(hash_bytes(&fs::read(path)?))
}

/// One output file of a stage; `path` is relative to the output
/// directory, with forward slashes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub input_hash: String,
    pub cached: bool,
    pub artifacts: Vec<ArtifactRecord>,
    pub completed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub corpus_hash: String,
    pub stages: Vec<StageRecord>,
    pub completed_at: DateTime<Utc>,
}

impl RunManifest {
    pub fn new(config_hash: String, corpus_hash: String) -> Self {
        Self {
            version: RUN_MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_hash,
            corpus_hash,
            stages: Vec::new(),
            completed_at: Utc::now(),
        }
    }

    /// The previous run's manifest, if one is present and readable.
    pub fn load(out_dir: &Path) -> Option<RunManifest> {
        let bytes = fs::read(out_dir.join(RUN_MANIFEST_FILE)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn push_stage(&mut self, record: StageRecord) {
        debug_assert!(self.stage(&record.stage).is_none(), "one record per stage");
        self.stages.push(record);
    }

    /// Atomically (re)write the manifest under `out_dir`.
    pub fn store(&mut self, out_dir: &Path) -> Result<(), PipelineError> {
        self.completed_at = Utc::now();
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        atomic_write(&out_dir.join(RUN_MANIFEST_FILE), json.as_bytes())?;
        Ok(())
    }
}

/// Hash freshly written stage outputs into artifact records, sorted by
/// path.
pub(super) fn record_artifacts(
    out_dir: &Path,
    rel_paths: &[String],
) -> Result<Vec<ArtifactRecord>, PipelineError> {
    let mut artifacts = Vec::with_capacity(rel_paths.len());
    for rel in rel_paths {
        artifacts.push(ArtifactRecord {
            path: rel.clone(),
            sha256: hash_file(&out_dir.join(rel))?,
        });
    }
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(artifacts)
}

/// The previous run's artifact records for `stage`, provided the input
/// hash matches and every artifact still sits on disk unmodified.
pub(super) fn reusable_artifacts(
    previous: Option<&RunManifest>,
    stage: &str,
    input_hash: &str,
    out_dir: &Path,
) -> Option<Vec<ArtifactRecord>> {
    let record = previous?.stage(stage)?;
    if record.input_hash != input_hash {
        return None;
    }
    for artifact in &record.artifacts {
        let path = out_dir.join(&artifact.path);
        match hash_file(&path) {
            Ok(h) if h == artifact.sha256 => {}
            _ => return None,
        }
    }
    Some(record.artifacts.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_the_published_test_vector() {
        assert_eq!(
            hash_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            hash_bytes(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn value_hash_is_stable_across_calls() {
        let value = ("forecast", 42_u64, vec!["a", "b"]);
        assert_eq!(hash_value(&value).unwrap(), hash_value(&value).unwrap());
        let other = ("forecast", 43_u64, vec!["a", "b"]);
        assert_ne!(hash_value(&value).unwrap(), hash_value(&other).unwrap());
    }

    #[test]
    fn manifest_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest::new("cfg".into(), "corpus".into());
        manifest.push_stage(StageRecord {
            stage: "forecast".into(),
            input_hash: "h1".into(),
            cached: false,
            artifacts: vec![ArtifactRecord {
                path: "forecast/scores.csv".into(),
                sha256: "00".into(),
            }],
            completed_at: Utc::now(),
        });
        manifest.store(dir.path()).unwrap();
        let back = RunManifest::load(dir.path()).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(back.stage("forecast").unwrap().input_hash, "h1");
        assert!(back.stage("classify").is_none());
    }

    #[test]
    fn reuse_requires_matching_hash_and_intact_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let artifact_rel = "scores.csv".to_string();
        fs::write(dir.path().join(&artifact_rel), b"rows").unwrap();
        let artifacts = record_artifacts(dir.path(), &[artifact_rel.clone()]).unwrap();
        let mut manifest = RunManifest::new("cfg".into(), "corpus".into());
        manifest.push_stage(StageRecord {
            stage: "forecast".into(),
            input_hash: "h1".into(),
            cached: false,
            artifacts,
            completed_at: Utc::now(),
        });

        let hit = reusable_artifacts(Some(&manifest), "forecast", "h1", dir.path());
        assert!(hit.is_some());
        assert!(reusable_artifacts(Some(&manifest), "forecast", "h2", dir.path()).is_none());
        assert!(reusable_artifacts(Some(&manifest), "features", "h1", dir.path()).is_none());
        assert!(reusable_artifacts(None, "forecast", "h1", dir.path()).is_none());

        // A modified artifact invalidates the record.
        fs::write(dir.path().join(&artifact_rel), b"tampered").unwrap();
        assert!(reusable_artifacts(Some(&manifest), "forecast", "h1", dir.path()).is_none());
    }

    #[test]
    fn artifact_records_sort_by_path() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), b"b").unwrap();
        fs::write(dir.path().join("a.txt"), b"a").unwrap();
        let records =
            record_artifacts(dir.path(), &["b.txt".into(), "a.txt".into()]).unwrap();
        assert_eq!(records[0].path, "a.txt");
        assert_eq!(records[1].path, "b.txt");
    }
}
