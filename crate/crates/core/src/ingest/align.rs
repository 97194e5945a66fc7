//! Resample weather onto a series' half-hourly timeline and attach
//! calendar covariates.

use super::{derive_calendar, CovariateFrame, IngestError, LoadSeries, WeatherSeries};

/// Build the covariate frame for one series.
///
/// Weather is forward-filled: each half-hour slot takes the most recent
/// observation at or before it, and an observation stays valid for one
/// weather step. Coverage therefore requires the first observation at or
/// before the series start and the last observation's validity window to
/// reach past the series end.
pub fn align_covariates(
    series: &LoadSeries,
    weather: &WeatherSeries,
) -> Result<CovariateFrame, IngestError> {
    let gap = |reason: String| IngestError::CoverageGap {
        series_id: series.building_id().into(),
        reason,
    };
    if series.is_empty() {
        return Ok(CovariateFrame::new(vec![], vec![], vec![], vec![], vec![]));
    }
    if weather.start() > series.start() {
        return Err(gap(format!(
            "weather starts {} after series start {}",
            weather.start(),
            series.start()
        )));
    }
    let step_ms = weather.step().num_milliseconds();
    let valid_until = weather.timestamp(weather.len() - 1) + weather.step();
    let series_end = series.timestamp(series.len() - 1);
    if series_end >= valid_until {
        return Err(gap(format!(
            "weather ends at {} (exclusive) before series end {}",
            valid_until, series_end
        )));
    }

    let n = series.len();
    let mut temperature = Vec::with_capacity(n);
    let mut dew_point = Vec::with_capacity(n);
    let mut wind_speed = Vec::with_capacity(n);
    let mut relative_humidity = Vec::with_capacity(n);
    let mut calendar = Vec::with_capacity(n);
    for i in 0..n {
        let t = series.timestamp(i);
        let offset_ms = t.signed_duration_since(weather.start()).num_milliseconds();
        let slot = (offset_ms / step_ms) as usize;
        temperature.push(weather.temperature()[slot]);
        dew_point.push(weather.dew_point()[slot]);
        wind_speed.push(weather.wind_speed()[slot]);
        relative_humidity.push(weather.relative_humidity()[slot]);
        calendar.push(derive_calendar(t));
    }
    Ok(CovariateFrame::new(
        temperature,
        dew_point,
        wind_speed,
        relative_humidity,
        calendar,
    ))
}
