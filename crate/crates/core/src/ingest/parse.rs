//! CSV parsing for meter and weather files.
//!
//! Meter files have configurable id/timestamp/value columns; weather files
//! use a fixed schema. Timestamps default to RFC 3339 or
//! `YYYY-MM-DD HH:MM:SS[.fraction]` (read as UTC) and can be overridden
//! with a strftime-style format string.

use super::{IngestError, RawSeries, WeatherSeries, STEP_MINUTES};
use chrono::{DateTime, Duration, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

const STEP_MS: i64 = STEP_MINUTES * 60 * 1000;

/// Names of the meter CSV columns, plus an optional timestamp format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub id: String,
    pub timestamp: String,
    pub value: String,
    /// strftime-style format for naive UTC timestamps; `None` accepts
    /// RFC 3339 or `YYYY-MM-DD HH:MM:SS[.fraction]`.
    #[serde(default)]
    pub timestamp_format: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: "building_id".into(),
            timestamp: "timestamp".into(),
            value: "kwh".into(),
            timestamp_format: None,
        }
    }
}

fn parse_timestamp(raw: &str, format: Option<&str>) -> Result<DateTime<Utc>, String> {
    let raw = raw.trim();
    if let Some(fmt) = format {
        return NaiveDateTime::parse_from_str(raw, fmt)
            .map(|n| n.and_utc())
            .map_err(|e| format!("timestamp {raw:?}: {e}"));
    }
    DateTime::parse_from_rfc3339(raw)
        .map(|d| d.with_timezone(&Utc))
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S%.f").map(|n| n.and_utc()))
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%.f").map(|n| n.and_utc()))
        .map_err(|_| format!("timestamp {raw:?} is neither RFC 3339 nor YYYY-MM-DD HH:MM:SS"))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::MissingColumn {
            column: name.into(),
        })
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn field<'r>(
    record: &'r csv::StringRecord,
    index: usize,
    column: &str,
) -> Result<&'r str, IngestError> {
    record.get(index).ok_or_else(|| IngestError::MalformedRow {
        line: record_line(record),
        reason: format!("missing field for column {column:?}"),
    })
}

/// Parse a meter CSV into one raw series per distinct building id.
///
/// Rows are sorted by timestamp within each id. Gaps that are whole
/// multiples of 30 minutes become runs of missing markers; any other gap is
/// a [`IngestError::NonUniformStep`]. Cells whose value does not parse as a
/// finite number become missing markers; finite negative readings are
/// rejected because cleaned series must be non-negative.
pub fn parse_meter_csv<R: Read>(
    source: R,
    column_map: &ColumnMap,
) -> Result<Vec<RawSeries>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let id_col = column_index(&headers, &column_map.id)?;
    let ts_col = column_index(&headers, &column_map.timestamp)?;
    let value_col = column_index(&headers, &column_map.value)?;
    let format = column_map.timestamp_format.as_deref();

    let mut rows: BTreeMap<String, Vec<(DateTime<Utc>, Option<f64>)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let id = field(&record, id_col, &column_map.id)?.trim();
        if id.is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "empty building id".into(),
            });
        }
        let timestamp = parse_timestamp(field(&record, ts_col, &column_map.timestamp)?, format)
            .map_err(|reason| IngestError::MalformedRow { line, reason })?;
        let raw_value = field(&record, value_col, &column_map.value)?.trim();
        let value = match raw_value.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                if v < 0.0 {
                    return Err(IngestError::MalformedRow {
                        line,
                        reason: format!("negative consumption {raw_value:?}"),
                    });
                }
                Some(v)
            }
            // Unparseable or non-finite readings (blank, "Null", "NaN", …)
            // are gaps to be imputed, not hard errors.
            _ => None,
        };
        rows.entry(id.to_owned()).or_default().push((timestamp, value));
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyInput("meter CSV has no data rows".into()));
    }

    let mut out = Vec::with_capacity(rows.len());
    for (building_id, mut entries) in rows {
        entries.sort_by_key(|(t, _)| *t);
        let start = entries[0].0;
        let mut values = vec![entries[0].1];
        let mut prev = start;
        for (timestamp, value) in entries.into_iter().skip(1) {
            let gap_ms = timestamp.signed_duration_since(prev).num_milliseconds();
            if gap_ms == 0 {
                return Err(IngestError::DuplicateTimestamp {
                    series_id: building_id,
                    timestamp: timestamp.to_rfc3339(),
                });
            }
            if gap_ms % STEP_MS != 0 {
                return Err(IngestError::NonUniformStep {
                    series_id: building_id,
                    timestamp: timestamp.to_rfc3339(),
                    gap_minutes: gap_ms / 60_000,
                });
            }
            for _ in 1..gap_ms / STEP_MS {
                values.push(None);
            }
            values.push(value);
            prev = timestamp;
        }
        out.push(RawSeries {
            building_id,
            start,
            values,
        });
    }
    Ok(out)
}

/// Serialize raw series back to meter CSV under the same column map.
/// Missing markers become empty value cells; together with
/// [`parse_meter_csv`] this forms a round-trip identity.
pub fn write_meter_csv<W: Write>(
    series: &[RawSeries],
    sink: W,
    column_map: &ColumnMap,
) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record([&column_map.id, &column_map.timestamp, &column_map.value])?;
    for s in series {
        for (index, value) in s.values.iter().enumerate() {
            let cell = value.map_or(String::new(), |v| v.to_string());
            writer.write_record([
                s.building_id.as_str(),
                &format_timestamp(s.timestamp(index)),
                &cell,
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub(crate) fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Parse a weather CSV with fixed columns `timestamp`, `temperature`,
/// `dew_point`, `wind_speed`, `relative_humidity`.
///
/// The step is inferred from the first two rows and must be constant; every
/// numeric cell must parse (weather has no missing-value channel).
pub fn parse_weather_csv<R: Read>(
    source: R,
    timestamp_format: Option<&str>,
) -> Result<WeatherSeries, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let ts_col = column_index(&headers, "timestamp")?;
    let channel_cols = [
        column_index(&headers, "temperature")?,
        column_index(&headers, "dew_point")?,
        column_index(&headers, "wind_speed")?,
        column_index(&headers, "relative_humidity")?,
    ];
    let channel_names = ["temperature", "dew_point", "wind_speed", "relative_humidity"];

    let mut rows: Vec<(DateTime<Utc>, [f64; 4])> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let timestamp = parse_timestamp(field(&record, ts_col, "timestamp")?, timestamp_format)
            .map_err(|reason| IngestError::MalformedRow { line, reason })?;
        let mut channels = [0.0; 4];
        for (slot, (&col, name)) in channel_cols.iter().zip(channel_names).enumerate() {
            let raw = field(&record, col, name)?.trim();
            channels[slot] = raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                IngestError::MalformedRow {
                    line,
                    reason: format!("{name} value {raw:?} is not a finite number"),
                }
            })?;
        }
        rows.push((timestamp, channels));
    }
    if rows.len() < 2 {
        return Err(IngestError::EmptyInput(
            "weather CSV needs at least 2 rows to establish a step".into(),
        ));
    }
    rows.sort_by_key(|(t, _)| *t);

    let start = rows[0].0;
    let step_ms = rows[1].0.signed_duration_since(start).num_milliseconds();
    if step_ms == 0 {
        return Err(IngestError::DuplicateTimestamp {
            series_id: "weather".into(),
            timestamp: rows[1].0.to_rfc3339(),
        });
    }
    for window in rows.windows(2) {
        let gap_ms = window[1].0.signed_duration_since(window[0].0).num_milliseconds();
        if gap_ms != step_ms {
            return Err(if gap_ms == 0 {
                IngestError::DuplicateTimestamp {
                    series_id: "weather".into(),
                    timestamp: window[1].0.to_rfc3339(),
                }
            } else {
                IngestError::NonUniformStep {
                    series_id: "weather".into(),
                    timestamp: window[1].0.to_rfc3339(),
                    gap_minutes: gap_ms / 60_000,
                }
            });
        }
    }
    let channel = |slot: usize| rows.iter().map(|(_, c)| c[slot]).collect();
    WeatherSeries::new(
        start,
        Duration::milliseconds(step_ms),
        channel(0),
        channel(1),
        channel(2),
        channel(3),
    )
}
