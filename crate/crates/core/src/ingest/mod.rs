//! Corpus ingestion: parse raw meter and weather files into clean, aligned,
//! calendar-annotated series.
//!
//! The flow is [`parse_meter_csv`] → [`impute_nearest`] per building →
//! [`align_covariates`] against a shared weather stream → [`Corpus`] →
//! [`discard_zero_mean`]. Cleaned corpora round-trip through an on-disk
//! archive ([`write_corpus_archive`] / [`read_corpus_archive`]).

mod align;
mod archive;
mod calendar;
mod clean;
mod parse;

pub use align::align_covariates;
pub(crate) use archive::atomic_write;
pub use archive::{
    read_corpus_archive, write_corpus_archive, ArchiveManifest, ArchiveManifestEntry,
};
pub use calendar::{derive_calendar, CalendarFeatures, PartOfDay, Season};
pub use clean::{discard_zero_mean, impute_nearest};
pub use parse::{parse_meter_csv, parse_weather_csv, write_meter_csv, ColumnMap};

use chrono::{DateTime, Duration, Utc};
use std::collections::BTreeMap;
use thiserror::Error;

/// Fixed sampling interval for load series.
pub const STEP_MINUTES: i64 = 30;
/// Half-hour steps in one day.
pub const STEPS_PER_DAY: usize = 48;
/// Half-hour steps in one week.
pub const STEPS_PER_WEEK: usize = 336;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing column {column:?} in header")]
    MissingColumn { column: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate timestamp {timestamp} in series {series_id}")]
    DuplicateTimestamp { series_id: String, timestamp: String },
    #[error("gap of {gap_minutes} min before {timestamp} in series {series_id} is not a whole number of steps")]
    NonUniformStep {
        series_id: String,
        timestamp: String,
        gap_minutes: i64,
    },
    #[error("series {series_id} has no complete data point")]
    AllMissing { series_id: String },
    #[error("invalid value at index {index} of series {series_id}: {reason}")]
    InvalidValue {
        series_id: String,
        index: usize,
        reason: String,
    },
    #[error("weather does not cover series {series_id}: {reason}")]
    CoverageGap { series_id: String, reason: String },
    #[error("building {building_id} already present in corpus")]
    DuplicateBuilding { building_id: String },
    #[error("covariate frame length {frame_len} does not match series length {series_len} for building {building_id}")]
    FrameMismatch {
        building_id: String,
        series_len: usize,
        frame_len: usize,
    },
    #[error("building id {building_id:?} is not archivable (must be [A-Za-z0-9_-][A-Za-z0-9._-]*)")]
    InvalidBuildingId { building_id: String },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("archive manifest error: {0}")]
    Manifest(String),
}

/// Readings straight from parsing; `None` marks a missing half-hour slot.
///
/// The timestamp of `values[i]` is `start + i · 30 min`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub building_id: String,
    pub start: DateTime<Utc>,
    pub values: Vec<Option<f64>>,
}

impl RawSeries {
    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(STEP_MINUTES * index as i64)
    }

    /// Re-wrap a cleaned series so cleaning operations can be re-applied.
    pub fn from_clean(series: &LoadSeries) -> RawSeries {
        RawSeries {
            building_id: series.building_id.clone(),
            start: series.start,
            values: series.values.iter().map(|&v| Some(v)).collect(),
        }
    }
}

/// One building's cleaned half-hourly kWh readings.
///
/// Construction enforces the cleaned-series invariants: every value is
/// finite and ≥ 0. The timestamp of `values[i]` is `start + i · 30 min`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    building_id: String,
    start: DateTime<Utc>,
    values: Vec<f64>,
}

impl LoadSeries {
    pub fn new(
        building_id: impl Into<String>,
        start: DateTime<Utc>,
        values: Vec<f64>,
    ) -> Result<Self, IngestError> {
        let building_id = building_id.into();
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(IngestError::InvalidValue {
                    series_id: building_id,
                    index,
                    reason: "not finite".into(),
                });
            }
            if v < 0.0 {
                return Err(IngestError::InvalidValue {
                    series_id: building_id,
                    index,
                    reason: "negative consumption".into(),
                });
            }
        }
        Ok(Self {
            building_id,
            start,
            values,
        })
    }

    pub fn building_id(&self) -> &str {
        &self.building_id
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(STEP_MINUTES * index as i64)
    }

    /// Mean consumption; 0 for an empty series so the zero-mean discard
    /// rule also removes empty series.
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

/// Weather observations on their native (constant-step) timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    start: DateTime<Utc>,
    step: Duration,
    temperature: Vec<f64>,
    dew_point: Vec<f64>,
    wind_speed: Vec<f64>,
    relative_humidity: Vec<f64>,
}

impl WeatherSeries {
    pub fn new(
        start: DateTime<Utc>,
        step: Duration,
        temperature: Vec<f64>,
        dew_point: Vec<f64>,
        wind_speed: Vec<f64>,
        relative_humidity: Vec<f64>,
    ) -> Result<Self, IngestError> {
        if step <= Duration::zero() {
            return Err(IngestError::EmptyInput("weather step must be positive".into()));
        }
        let n = temperature.len();
        if dew_point.len() != n || wind_speed.len() != n || relative_humidity.len() != n {
            return Err(IngestError::EmptyInput(
                "weather channels differ in length".into(),
            ));
        }
        if n == 0 {
            return Err(IngestError::EmptyInput("weather series is empty".into()));
        }
        for (name, channel) in [
            ("temperature", &temperature),
            ("dew_point", &dew_point),
            ("wind_speed", &wind_speed),
            ("relative_humidity", &relative_humidity),
        ] {
            if let Some(index) = channel.iter().position(|v| !v.is_finite()) {
                return Err(IngestError::InvalidValue {
                    series_id: format!("weather.{name}"),
                    index,
                    reason: "not finite".into(),
                });
            }
        }
        Ok(Self {
            start,
            step,
            temperature,
            dew_point,
            wind_speed,
            relative_humidity,
        })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn step(&self) -> Duration {
        self.step
    }

    pub fn len(&self) -> usize {
        self.temperature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temperature.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + self.step * index as i32
    }

    pub fn temperature(&self) -> &[f64] {
        &self.temperature
    }

    pub fn dew_point(&self) -> &[f64] {
        &self.dew_point
    }

    pub fn wind_speed(&self) -> &[f64] {
        &self.wind_speed
    }

    pub fn relative_humidity(&self) -> &[f64] {
        &self.relative_humidity
    }
}

/// Fixed order of the four weather channels, used by design matrices and
/// the archive format alike.
pub const WEATHER_CHANNELS: [&str; 4] =
    ["temperature", "dew_point", "wind_speed", "relative_humidity"];

/// Weather and calendar covariates resampled to one load series' timeline.
///
/// Row `i` describes the same half-hour as `series.values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateFrame {
    temperature: Vec<f64>,
    dew_point: Vec<f64>,
    wind_speed: Vec<f64>,
    relative_humidity: Vec<f64>,
    calendar: Vec<CalendarFeatures>,
}

impl CovariateFrame {
    pub fn new(
        temperature: Vec<f64>,
        dew_point: Vec<f64>,
        wind_speed: Vec<f64>,
        relative_humidity: Vec<f64>,
        calendar: Vec<CalendarFeatures>,
    ) -> Self {
        let n = calendar.len();
        assert!(
            temperature.len() == n
                && dew_point.len() == n
                && wind_speed.len() == n
                && relative_humidity.len() == n,
            "covariate channels must share one length"
        );
        Self {
            temperature,
            dew_point,
            wind_speed,
            relative_humidity,
            calendar,
        }
    }

    pub fn len(&self) -> usize {
        self.calendar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calendar.is_empty()
    }

    pub fn temperature(&self) -> &[f64] {
        &self.temperature
    }

    pub fn dew_point(&self) -> &[f64] {
        &self.dew_point
    }

    pub fn wind_speed(&self) -> &[f64] {
        &self.wind_speed
    }

    pub fn relative_humidity(&self) -> &[f64] {
        &self.relative_humidity
    }

    pub fn calendar(&self) -> &[CalendarFeatures] {
        &self.calendar
    }

    /// Channels in [`WEATHER_CHANNELS`] order.
    pub fn weather_channels(&self) -> [&[f64]; 4] {
        [
            &self.temperature,
            &self.dew_point,
            &self.wind_speed,
            &self.relative_humidity,
        ]
    }
}

/// One retained building: cleaned series plus aligned covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    pub series: LoadSeries,
    pub frame: CovariateFrame,
}

/// All retained buildings keyed by id. Iteration follows id order, which
/// keeps every corpus-level artifact deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    buildings: BTreeMap<String, Building>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, series: LoadSeries, frame: CovariateFrame) -> Result<(), IngestError> {
        if frame.len() != series.len() {
            return Err(IngestError::FrameMismatch {
                building_id: series.building_id().into(),
                series_len: series.len(),
                frame_len: frame.len(),
            });
        }
        let id = series.building_id().to_owned();
        if self.buildings.contains_key(&id) {
            return Err(IngestError::DuplicateBuilding { building_id: id });
        }
        self.buildings.insert(id, Building { series, frame });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.buildings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buildings.is_empty()
    }

    pub fn get(&self, building_id: &str) -> Option<&Building> {
        self.buildings.get(building_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Building)> {
        self.buildings.iter().map(|(id, b)| (id.as_str(), b))
    }

    pub fn building_ids(&self) -> impl Iterator<Item = &str> {
        self.buildings.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2013, 1, 7, 0, 0, 0).unwrap()
    }

    #[test]
    fn load_series_rejects_negative_and_non_finite() {
        assert!(matches!(
            LoadSeries::new("b", t0(), vec![1.0, -0.1]),
            Err(IngestError::InvalidValue { index: 1, .. })
        ));
        assert!(matches!(
            LoadSeries::new("b", t0(), vec![f64::NAN]),
            Err(IngestError::InvalidValue { index: 0, .. })
        ));
    }

    #[test]
    fn load_series_timestamps_step_by_half_hour() {
        let s = LoadSeries::new("b", t0(), vec![0.0; 4]).unwrap();
        assert_eq!(s.timestamp(0), t0());
        assert_eq!(s.timestamp(3), t0() + Duration::minutes(90));
    }

    #[test]
    fn empty_series_mean_is_zero() {
        let s = LoadSeries::new("b", t0(), vec![]).unwrap();
        assert_eq!(s.mean(), 0.0);
    }

    #[test]
    fn corpus_rejects_duplicate_building() {
        let mut corpus = Corpus::new();
        let series = LoadSeries::new("b", t0(), vec![1.0]).unwrap();
        let frame = CovariateFrame::new(
            vec![0.0],
            vec![0.0],
            vec![0.0],
            vec![0.0],
            vec![derive_calendar(t0())],
        );
        corpus.insert(series.clone(), frame.clone()).unwrap();
        assert!(matches!(
            corpus.insert(series, frame),
            Err(IngestError::DuplicateBuilding { .. })
        ));
    }

    #[test]
    fn corpus_rejects_frame_length_mismatch() {
        let mut corpus = Corpus::new();
        let series = LoadSeries::new("b", t0(), vec![1.0, 2.0]).unwrap();
        let frame = CovariateFrame::new(
            vec![0.0],
            vec![0.0],
            vec![0.0],
            vec![0.0],
            vec![derive_calendar(t0())],
        );
        assert!(matches!(
            corpus.insert(series, frame),
            Err(IngestError::FrameMismatch { .. })
        ));
    }

    #[test]
    fn corpus_iterates_in_id_order() {
        let mut corpus = Corpus::new();
        for id in ["b2", "a1", "c3"] {
            let series = LoadSeries::new(id, t0(), vec![1.0]).unwrap();
            let frame = CovariateFrame::new(
                vec![0.0],
                vec![0.0],
                vec![0.0],
                vec![0.0],
                vec![derive_calendar(t0())],
            );
            corpus.insert(series, frame).unwrap();
        }
        let ids: Vec<&str> = corpus.building_ids().collect();
        assert_eq!(ids, ["a1", "b2", "c3"]);
    }
}
