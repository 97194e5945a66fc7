//! Persistence forecasters: repeat the same half-hour slot from the
//! previous day or the previous week.

use super::ForecastError;
use crate::ingest::{LoadSeries, STEPS_PER_DAY, STEPS_PER_WEEK};

fn persistence(
    series: &LoadSeries,
    origin: usize,
    horizon: usize,
    period: usize,
) -> Result<Vec<f64>, ForecastError> {
    // A horizon past the period would read values at or after the origin.
    if horizon > period {
        return Err(ForecastError::InvalidHorizon { horizon, period });
    }
    if origin < period || origin > series.len() {
        return Err(ForecastError::InsufficientHistory(format!(
            "origin {} needs {} steps of history within a series of length {}",
            origin,
            period,
            series.len()
        )));
    }
    Ok(series.values()[origin - period..origin - period + horizon].to_vec())
}

/// `forecast[h] = series[origin − 48 + h]`: the same slot yesterday.
pub fn forecast_daily_naive(
    series: &LoadSeries,
    origin: usize,
    horizon: usize,
) -> Result<Vec<f64>, ForecastError> {
    persistence(series, origin, horizon, STEPS_PER_DAY)
}

/// `forecast[h] = series[origin − 336 + h]`: the same slot one week ago.
pub fn forecast_weekly_naive(
    series: &LoadSeries,
    origin: usize,
    horizon: usize,
) -> Result<Vec<f64>, ForecastError> {
    persistence(series, origin, horizon, STEPS_PER_WEEK)
}
