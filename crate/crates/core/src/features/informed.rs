//! Domain-informed load-shape features.
//!
//! Statistics designed around how buildings consume electricity: daily
//! energy, peaks and base load, evening/overnight energy shares, weekday
//! versus weekend behavior, seasonal means, and the strength of the
//! weekly rhythm. Order and definitions live in [`INFORMED_REGISTRY`].
//!
//! Day-based features run over "complete days": the consecutive
//! midnight-aligned 48-step blocks inside the series. Whole-series
//! features (peak, base load, seasonal means) read every step.

use super::{stats, FeatureError, FeatureFamily, FeatureVector, INFORMED_REGISTRY};
use crate::forecast::steps_since_midnight;
use crate::ingest::{CovariateFrame, LoadSeries, Season, STEPS_PER_DAY, STEPS_PER_WEEK};

const MIN_COMPLETE_DAYS: usize = 7;

pub fn extract_domain_informed(
    series: &LoadSeries,
    frame: &CovariateFrame,
) -> Result<FeatureVector, FeatureError> {
    let x = series.values();
    let n = x.len();
    if frame.len() != n {
        return Err(FeatureError::FrameMismatch {
            building_id: series.building_id().into(),
            series_len: n,
            frame_len: frame.len(),
        });
    }
    let Some(past_midnight) = steps_since_midnight(series.start()) else {
        return Err(FeatureError::Misaligned {
            building_id: series.building_id().into(),
        });
    };
    let offset = (STEPS_PER_DAY - past_midnight) % STEPS_PER_DAY;
    let n_days = n.saturating_sub(offset) / STEPS_PER_DAY;
    if n_days < MIN_COMPLETE_DAYS {
        return Err(FeatureError::TooShort {
            building_id: series.building_id().into(),
            needed: offset + MIN_COMPLETE_DAYS * STEPS_PER_DAY,
            got: n,
            what: "domain-informed features (seven complete days)",
        });
    }
    let days: Vec<&[f64]> = x[offset..offset + n_days * STEPS_PER_DAY]
        .chunks_exact(STEPS_PER_DAY)
        .collect();
    let span = offset..offset + n_days * STEPS_PER_DAY;
    let calendar = frame.calendar();

    let mean_daily = stats::mean(&days.iter().map(|d| d.iter().sum()).collect::<Vec<f64>>());
    let peak = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let base = stats::percentile(x, 2.0);
    let load_factor = stats::mean(x) / peak;

    // Hour of each day's maximum slot, ties to the earliest slot.
    let mean_peak_hour = stats::mean(
        &days
            .iter()
            .map(|day| {
                let peak_step = day
                    .iter()
                    .enumerate()
                    .max_by(|(i, a), (j, b)| a.total_cmp(b).then(j.cmp(i)))
                    .map(|(i, _)| i)
                    .expect("a day has 48 slots");
                (peak_step / 2) as f64
            })
            .collect::<Vec<f64>>(),
    );

    let mut total = 0.0;
    let mut evening = 0.0;
    let mut overnight = 0.0;
    let mut weekday = (0.0, 0_usize);
    let mut weekend = (0.0, 0_usize);
    for t in span.clone() {
        let cal = &calendar[t];
        total += x[t];
        if (18..22).contains(&cal.hour_of_day) {
            evening += x[t];
        }
        if cal.hour_of_day < 6 {
            overnight += x[t];
        }
        if cal.day_of_week < 5 {
            weekday.0 += x[t];
            weekday.1 += 1;
        } else {
            weekend.0 += x[t];
            weekend.1 += 1;
        }
    }
    // Seven consecutive complete days always cover both kinds of day.
    let weekday_weekend_ratio =
        (weekday.0 / weekday.1 as f64) / (weekend.0 / weekend.1 as f64);

    let season_mean = |season: Season| {
        let values: Vec<f64> = (0..n)
            .filter(|&t| calendar[t].season == season)
            .map(|t| x[t])
            .collect();
        if values.is_empty() {
            0.0
        } else {
            stats::mean(&values)
        }
    };

    // Mean weekly profile keyed by (day of week, step in day); strength
    // is the share of variance it explains.
    let span_values = &x[span.clone()];
    let span_var = stats::population_variance(span_values);
    let weekly_strength = if span_var == 0.0 {
        0.0
    } else {
        let mut sums = [0.0; STEPS_PER_WEEK];
        let mut counts = [0_usize; STEPS_PER_WEEK];
        let slot = |t: usize| {
            calendar[t].day_of_week as usize * STEPS_PER_DAY + (past_midnight + t) % STEPS_PER_DAY
        };
        for t in span.clone() {
            sums[slot(t)] += x[t];
            counts[slot(t)] += 1;
        }
        let residuals: Vec<f64> = span
            .clone()
            .map(|t| x[t] - sums[slot(t)] / counts[slot(t)] as f64)
            .collect();
        (1.0 - stats::population_variance(&residuals) / span_var).clamp(0.0, 1.0)
    };

    let daily_profile: Vec<f64> = (0..STEPS_PER_DAY)
        .map(|s| stats::mean(&days.iter().map(|day| day[s]).collect::<Vec<f64>>()))
        .collect();

    let daily_range_mean = stats::mean(
        &days
            .iter()
            .map(|day| {
                day.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    - day.iter().copied().fold(f64::INFINITY, f64::min)
            })
            .collect::<Vec<f64>>(),
    );

    let values = vec![
        mean_daily,
        peak,
        base,
        load_factor,
        mean_peak_hour,
        evening / total,
        overnight / total,
        weekday_weekend_ratio,
        season_mean(Season::Winter),
        season_mean(Season::Spring),
        season_mean(Season::Summer),
        season_mean(Season::Autumn),
        weekly_strength,
        stats::skewness(&daily_profile),
        peak / base,
        daily_range_mean,
    ];
    Ok(FeatureVector::from_registry(
        FeatureFamily::DomainInformed,
        &INFORMED_REGISTRY,
        values,
    ))
}
