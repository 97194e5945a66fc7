//! On-disk archive for a cleaned corpus: one CSV per building plus a JSON
//! manifest. The archive is self-contained: per-building files carry the
//! already-aligned weather channels, and calendar covariates are re-derived
//! from timestamps on read.

use super::parse::format_timestamp;
use super::{
    Corpus, CovariateFrame, IngestError, LoadSeries, WEATHER_CHANNELS,
};
use crate::ingest::derive_calendar;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

/// Per-building record in the archive manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveManifestEntry {
    pub building_id: String,
    pub start: DateTime<Utc>,
    pub step_minutes: u32,
    pub length: usize,
    pub discarded: bool,
}

impl ArchiveManifestEntry {
    /// Audit record for a building dropped by preprocessing.
    pub fn discarded_from(series: &LoadSeries) -> Self {
        Self {
            building_id: series.building_id().into(),
            start: series.start(),
            step_minutes: super::STEP_MINUTES as u32,
            length: series.len(),
            discarded: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub buildings: Vec<ArchiveManifestEntry>,
}

impl ArchiveManifest {
    pub fn retained(&self) -> impl Iterator<Item = &ArchiveManifestEntry> {
        self.buildings.iter().filter(|e| !e.discarded)
    }
}

/// Write `bytes` to `path` via a sibling temp file and a rename, so readers
/// never observe a partial file.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp_name = path.as_os_str().to_owned();
    tmp_name.push(".tmp");
    let tmp = PathBuf::from(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn archivable_id(id: &str) -> bool {
    let mut chars = id.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    (first.is_ascii_alphanumeric() || first == '_' || first == '-')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

fn building_csv_path(dir: &Path, building_id: &str) -> PathBuf {
    dir.join("buildings").join(format!("{building_id}.csv"))
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

/// Write the retained corpus plus discard audit records under `dir`.
/// Discarded buildings appear in the manifest only; no CSV is written for
/// them. Returns the manifest that was written.
pub fn write_corpus_archive(
    dir: &Path,
    corpus: &Corpus,
    discarded: &[ArchiveManifestEntry],
) -> Result<ArchiveManifest, IngestError> {
    fs::create_dir_all(dir.join("buildings"))?;
    let mut entries = Vec::with_capacity(corpus.len() + discarded.len());
    let mut seen = BTreeSet::new();
    for entry in discarded {
        if !entry.discarded {
            return Err(IngestError::Manifest(format!(
                "building {} passed as discarded but not flagged",
                entry.building_id
            )));
        }
        entries.push(entry.clone());
        seen.insert(entry.building_id.clone());
    }
    for (id, building) in corpus.iter() {
        if !archivable_id(id) {
            return Err(IngestError::InvalidBuildingId {
                building_id: id.into(),
            });
        }
        if !seen.insert(id.to_owned()) {
            return Err(IngestError::Manifest(format!(
                "building {id} is both retained and discarded"
            )));
        }
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["timestamp", "kwh"];
        header.extend(WEATHER_CHANNELS);
        writer
            .write_record(&header)
            .map_err(IngestError::from)?;
        let channels = building.frame.weather_channels();
        for i in 0..building.series.len() {
            let mut row = vec![
                format_timestamp(building.series.timestamp(i)),
                building.series.values()[i].to_string(),
            ];
            for channel in channels {
                row.push(channel[i].to_string());
            }
            writer.write_record(&row)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| IngestError::Manifest(format!("CSV buffer flush failed: {e}")))?;
        atomic_write(&building_csv_path(dir, id), &bytes)?;
        entries.push(ArchiveManifestEntry {
            building_id: id.into(),
            start: building.series.start(),
            step_minutes: super::STEP_MINUTES as u32,
            length: building.series.len(),
            discarded: false,
        });
    }
    entries.sort_by(|a, b| a.building_id.cmp(&b.building_id));
    let manifest = ArchiveManifest { buildings: entries };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    atomic_write(&manifest_path(dir), json.as_bytes())?;
    Ok(manifest)
}

/// Load an archive written by [`write_corpus_archive`]. Every retained
/// building's CSV is validated against its manifest record.
pub fn read_corpus_archive(dir: &Path) -> Result<(Corpus, ArchiveManifest), IngestError> {
    let manifest: ArchiveManifest =
        serde_json::from_slice(&fs::read(manifest_path(dir))?)?;
    let mut corpus = Corpus::new();
    for entry in manifest.retained() {
        let path = building_csv_path(dir, &entry.building_id);
        let mut reader = csv::Reader::from_path(&path)?;
        {
            let headers = reader.headers()?;
            let mut expected = vec!["timestamp", "kwh"];
            expected.extend(WEATHER_CHANNELS);
            if headers.iter().collect::<Vec<_>>() != expected {
                return Err(IngestError::Manifest(format!(
                    "unexpected header in {}",
                    path.display()
                )));
            }
        }
        let mut values = Vec::with_capacity(entry.length);
        let mut channels: [Vec<f64>; 4] = Default::default();
        let mut calendar = Vec::with_capacity(entry.length);
        for (index, record) in reader.records().enumerate() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let bad_cell = |reason: String| IngestError::MalformedRow { line, reason };
            let timestamp = DateTime::parse_from_rfc3339(record.get(0).unwrap_or_default())
                .map_err(|e| bad_cell(format!("timestamp: {e}")))?
                .with_timezone(&Utc);
            let expected_ts =
                entry.start + chrono::Duration::minutes(super::STEP_MINUTES * index as i64);
            if timestamp != expected_ts {
                return Err(bad_cell(format!(
                    "timestamp {timestamp} does not sit on the archived grid"
                )));
            }
            let number = |slot: usize, name: &str| {
                record
                    .get(slot)
                    .unwrap_or_default()
                    .parse::<f64>()
                    .map_err(|e| bad_cell(format!("{name}: {e}")))
            };
            values.push(number(1, "kwh")?);
            for (c, name) in WEATHER_CHANNELS.iter().enumerate() {
                channels[c].push(number(2 + c, name)?);
            }
            calendar.push(derive_calendar(timestamp));
        }
        if values.len() != entry.length {
            return Err(IngestError::Manifest(format!(
                "building {}: manifest says {} rows, file has {}",
                entry.building_id,
                entry.length,
                values.len()
            )));
        }
        let series = LoadSeries::new(entry.building_id.clone(), entry.start, values)?;
        let [temperature, dew_point, wind_speed, relative_humidity] = channels;
        let frame = CovariateFrame::new(
            temperature,
            dew_point,
            wind_speed,
            relative_humidity,
            calendar,
        );
        corpus.insert(series, frame)?;
    }
    Ok((corpus, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{align_covariates, WeatherSeries};
    use chrono::{Duration, TimeZone};

    fn sample_corpus() -> Corpus {
        let t0 = Utc.with_ymd_and_hms(2013, 1, 7, 0, 0, 0).unwrap();
        let weather = WeatherSeries::new(
            t0,
            Duration::minutes(60),
            vec![5.0, 6.5, 7.25],
            vec![1.0, 1.5, 2.0],
            vec![3.0, 3.0, 4.0],
            vec![80.0, 78.0, 75.0],
        )
        .unwrap();
        let mut corpus = Corpus::new();
        for (id, base) in [("b1", 1.0), ("b2", 2.0)] {
            let values: Vec<f64> = (0..4).map(|i| base + i as f64 * 0.125).collect();
            let series = LoadSeries::new(id, t0, values).unwrap();
            let frame = align_covariates(&series, &weather).unwrap();
            corpus.insert(series, frame).unwrap();
        }
        corpus
    }

    #[test]
    fn archive_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = sample_corpus();
        let written = write_corpus_archive(dir.path(), &corpus, &[]).unwrap();
        let (read, manifest) = read_corpus_archive(dir.path()).unwrap();
        assert_eq!(read, corpus);
        assert_eq!(manifest, written);
    }

    #[test]
    fn discarded_entries_recorded_without_csv() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = sample_corpus();
        let dropped = LoadSeries::new(
            "zzz",
            Utc.with_ymd_and_hms(2013, 1, 7, 0, 0, 0).unwrap(),
            vec![0.0; 4],
        )
        .unwrap();
        let manifest = write_corpus_archive(
            dir.path(),
            &corpus,
            &[ArchiveManifestEntry::discarded_from(&dropped)],
        )
        .unwrap();
        assert_eq!(manifest.buildings.len(), 3);
        assert!(manifest.buildings[2].discarded);
        assert!(!building_csv_path(dir.path(), "zzz").exists());
        let (read, _) = read_corpus_archive(dir.path()).unwrap();
        assert_eq!(read.len(), 2);
    }

    #[test]
    fn unsafe_building_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let t0 = Utc.with_ymd_and_hms(2013, 1, 7, 0, 0, 0).unwrap();
        let mut corpus = Corpus::new();
        let series = LoadSeries::new("../escape", t0, vec![1.0]).unwrap();
        let frame = CovariateFrame::new(
            vec![0.0],
            vec![0.0],
            vec![0.0],
            vec![0.0],
            vec![derive_calendar(t0)],
        );
        corpus.insert(series, frame).unwrap();
        let got = write_corpus_archive(dir.path(), &corpus, &[]);
        assert!(matches!(got, Err(IngestError::InvalidBuildingId { .. })));
    }

    #[test]
    fn length_mismatch_detected_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = sample_corpus();
        write_corpus_archive(dir.path(), &corpus, &[]).unwrap();
        let path = building_csv_path(dir.path(), "b1");
        let mut text = fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = text.lines().take(3).collect();
        text = truncated.join("\n");
        text.push('\n');
        fs::write(&path, text).unwrap();
        let got = read_corpus_archive(dir.path());
        assert!(matches!(got, Err(IngestError::Manifest(_))));
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifact.json");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert!(!dir.path().join("artifact.json.tmp").exists());
    }
}
