//! Design-matrix construction for the regression forecasters.
//!
//! Every feature of a row at timestep `t` is readable at that day's
//! midnight origin: load lags are all ≥ the horizon, and the rolling
//! previous-day/previous-week means are anchored at the midnight of `t`'s
//! day rather than at `t`, so train and forecast rows share one leak-free
//! definition. Weather columns at `t` itself are the covariate
//! look-forward contract (weather treated as a perfect forecast).

use super::{ForecastError, WindowConfig};
use crate::ingest::{
    CalendarFeatures, CovariateFrame, LoadSeries, PartOfDay, Season, WEATHER_CHANNELS,
    STEPS_PER_DAY, STEPS_PER_WEEK,
};
use chrono::Timelike;
use std::ops::Range;

/// A named design matrix with aligned targets, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    columns: Vec<String>,
    data: Vec<f64>,
    targets: Vec<f64>,
}

impl SupervisedSet {
    pub fn new(columns: Vec<String>, data: Vec<f64>, targets: Vec<f64>) -> Self {
        assert!(!columns.is_empty(), "a design matrix needs columns");
        assert_eq!(data.len(), columns.len() * targets.len());
        debug_assert!(
            {
                let mut names = columns.clone();
                names.sort();
                names.windows(2).all(|w| w[0] != w[1])
            },
            "column names must be unique"
        );
        Self {
            columns,
            data,
            targets,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn row(&self, index: usize) -> &[f64] {
        let w = self.n_cols();
        &self.data[index * w..(index + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Steps since midnight for an on-grid timestamp; `None` when the
/// timestamp does not sit on a civil half-hour.
pub(crate) fn steps_since_midnight(t: chrono::DateTime<chrono::Utc>) -> Option<usize> {
    if t.second() != 0 || t.nanosecond() != 0 {
        return None;
    }
    let minutes = t.hour() * 60 + t.minute();
    if minutes % 30 != 0 {
        return None;
    }
    Some((minutes / 30) as usize)
}

fn one_hot_columns() -> Vec<String> {
    let mut names = Vec::with_capacity(52);
    names.extend((0..24).map(|h| format!("hour_{h}")));
    names.extend(
        PartOfDay::ALL
            .iter()
            .map(|p| format!("part_of_day_{}", p.name())),
    );
    names.push("is_workday".into());
    names.extend((0..7).map(|d| format!("day_of_week_{d}")));
    names.extend((1..=12).map(|m| format!("month_{m}")));
    names.extend(Season::ALL.iter().map(|s| format!("season_{}", s.name())));
    names
}

fn indicator(hit: bool) -> f64 {
    if hit {
        1.0
    } else {
        0.0
    }
}

fn push_one_hot(row: &mut Vec<f64>, cal: &CalendarFeatures) {
    for h in 0..24u8 {
        row.push(indicator(cal.hour_of_day == h));
    }
    for p in PartOfDay::ALL {
        row.push(indicator(cal.part_of_day == p));
    }
    row.push(indicator(cal.is_workday));
    for d in 0..7u8 {
        row.push(indicator(cal.day_of_week == d));
    }
    for m in 1..=12u8 {
        row.push(indicator(cal.month == m));
    }
    for s in Season::ALL {
        row.push(indicator(cal.season == s));
    }
}

/// Build one supervised row per timestep in `range`.
pub fn build_supervised(
    series: &LoadSeries,
    frame: &CovariateFrame,
    cfg: &WindowConfig,
    range: Range<usize>,
) -> Result<SupervisedSet, ForecastError> {
    let lags = cfg.validated_lags()?;
    if frame.len() != series.len() {
        return Err(ForecastError::SchemaMismatch(format!(
            "covariate frame has {} rows for a series of length {}",
            frame.len(),
            series.len()
        )));
    }
    if range.end > series.len() || range.start > range.end {
        return Err(ForecastError::InsufficientHistory(format!(
            "row range {}..{} does not fit a series of length {}",
            range.start,
            range.end,
            series.len()
        )));
    }
    let Some(start_offset) = steps_since_midnight(series.start()) else {
        return Err(ForecastError::MisalignedSeries {
            building_id: series.building_id().into(),
        });
    };
    let max_lag = *lags.last().expect("validated lags are nonempty");
    if range.start < max_lag {
        return Err(ForecastError::InsufficientHistory(format!(
            "row range starts at {} but the largest target lag is {max_lag}",
            range.start
        )));
    }
    if range.start < cfg.covariate_lookback {
        return Err(ForecastError::InsufficientHistory(format!(
            "row range starts at {} but the covariate lookback is {}",
            range.start, cfg.covariate_lookback
        )));
    }
    let anchor_of = |t: usize| t - (start_offset + t) % STEPS_PER_DAY;
    if !range.is_empty() && anchor_of(range.start) < STEPS_PER_WEEK {
        return Err(ForecastError::InsufficientHistory(format!(
            "day anchor of row {} sits at {}, before one full week of history",
            range.start,
            anchor_of(range.start)
        )));
    }

    let mut columns: Vec<String> = lags.iter().map(|lag| format!("lag_{lag}")).collect();
    columns.push("prev_day_mean".into());
    columns.push("prev_week_mean".into());
    columns.extend(WEATHER_CHANNELS.iter().map(|c| format!("{c}_t")));
    columns.extend(
        WEATHER_CHANNELS
            .iter()
            .map(|c| format!("{c}_lag_{}", cfg.covariate_lookback)),
    );
    columns.extend(one_hot_columns());

    let values = series.values();
    let channels = frame.weather_channels();
    let calendar = frame.calendar();
    let mean = |window: Range<usize>| {
        values[window.clone()].iter().sum::<f64>() / window.len() as f64
    };

    let mut data = Vec::with_capacity(columns.len() * range.len());
    let mut targets = Vec::with_capacity(range.len());
    // Rows of one day share their anchor, so the rolling means are cached.
    let mut cached: Option<(usize, f64, f64)> = None;
    let mut row = Vec::with_capacity(columns.len());
    for t in range {
        let anchor = anchor_of(t);
        let (day_mean, week_mean) = match cached {
            Some((a, d, w)) if a == anchor => (d, w),
            _ => {
                let d = mean(anchor - STEPS_PER_DAY..anchor);
                let w = mean(anchor - STEPS_PER_WEEK..anchor);
                cached = Some((anchor, d, w));
                (d, w)
            }
        };
        row.clear();
        for &lag in &lags {
            row.push(values[t - lag]);
        }
        row.push(day_mean);
        row.push(week_mean);
        for channel in channels {
            row.push(channel[t]);
        }
        for channel in channels {
            row.push(channel[t - cfg.covariate_lookback]);
        }
        push_one_hot(&mut row, &calendar[t]);
        data.extend_from_slice(&row);
        targets.push(values[t]);
    }
    Ok(SupervisedSet::new(columns, data, targets))
}
