//! Windowed day-ahead backtest over the four forecaster families.
//!
//! The series splits at `floor(len * split_frac)`: everything before the
//! split trains the regression models once, and every midnight in the
//! remaining span becomes a forecast origin. Each model forecasts the
//! next `horizon` steps from every origin; errors pool across origins
//! into one RMSE/MAE per model, and rMAE divides each model's MAE by the
//! daily-persistence MAE over the same windows.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    build_supervised, fit_gbm, fit_linreg, forecast_daily_naive, forecast_weekly_naive,
    predict_gbm, predict_linreg, steps_since_midnight, ForecastError, GbmParams, ModelKind,
    WindowConfig, DEFAULT_RIDGE_EPS,
};
use crate::ingest::{CovariateFrame, LoadSeries, STEPS_PER_DAY, STEPS_PER_WEEK};
use crate::metrics::{mae, rmse};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    pub window: WindowConfig,
    /// Fraction of the series that trains the regression models; the rest
    /// is the evaluation span. Must lie strictly between 0 and 1.
    pub split_frac: f64,
    pub gbm: GbmParams,
    pub ridge_eps: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            split_frac: 0.8,
            gbm: GbmParams::default(),
            ridge_eps: DEFAULT_RIDGE_EPS,
        }
    }
}

/// Pooled errors for one model over every evaluation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub rmse: f64,
    pub mae: f64,
    /// MAE relative to daily persistence over the same windows. When the
    /// daily-persistence MAE is zero this is 1 for an equally perfect
    /// model and infinity otherwise.
    pub rmae: f64,
}

/// Backtest outcome for one building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub building_id: String,
    pub split_index: usize,
    pub split_timestamp: chrono::DateTime<chrono::Utc>,
    /// Forecast origins, as indices into the series. Each one sits at a
    /// midnight inside the evaluation span.
    pub origins: Vec<usize>,
    pub scores: BTreeMap<ModelKind, ModelScore>,
    /// Per model: one forecast of `horizon` values per origin.
    pub forecasts: BTreeMap<ModelKind, Vec<Vec<f64>>>,
}

impl ForecastReport {
    /// The winning model: lowest RMSE, ties to the earlier `ModelKind`.
    pub fn best_model(&self) -> ModelKind {
        let (kind, _) = self
            .scores
            .iter()
            .min_by(|(ka, a), (kb, b)| a.rmse.total_cmp(&b.rmse).then(ka.cmp(kb)))
            .expect("a report always scores at least one model");
        *kind
    }
}

fn pooled_against(actual: &[Vec<f64>], forecasts: &[Vec<f64>]) -> (f64, f64) {
    let flat_a: Vec<f64> = actual.iter().flatten().copied().collect();
    let flat_f: Vec<f64> = forecasts.iter().flatten().copied().collect();
    (
        rmse(&flat_a, &flat_f).expect("pooled windows are nonempty and aligned"),
        mae(&flat_a, &flat_f).expect("pooled windows are nonempty and aligned"),
    )
}

pub fn backtest_day_ahead(
    series: &LoadSeries,
    frame: &CovariateFrame,
    cfg: &BacktestConfig,
    kinds: &[ModelKind],
) -> Result<ForecastReport, ForecastError> {
    if !(cfg.split_frac > 0.0 && cfg.split_frac < 1.0) {
        return Err(ForecastError::InvalidConfig(
            "split_frac must lie strictly between 0 and 1".into(),
        ));
    }
    if kinds.is_empty() {
        return Err(ForecastError::InvalidConfig(
            "at least one model kind must be requested".into(),
        ));
    }
    let kinds: BTreeSet<ModelKind> = kinds.iter().copied().collect();
    let lags = cfg.window.validated_lags()?;
    let horizon = cfg.window.horizon;
    let n = series.len();
    if frame.len() != n {
        return Err(ForecastError::SchemaMismatch(format!(
            "series has {n} steps but the covariate frame has {}",
            frame.len()
        )));
    }
    let Some(start_offset) = steps_since_midnight(series.start()) else {
        return Err(ForecastError::MisalignedSeries {
            building_id: series.building_id().into(),
        });
    };

    let split = (n as f64 * cfg.split_frac).floor() as usize;
    let needs_regression =
        kinds.contains(&ModelKind::LinReg) || kinds.contains(&ModelKind::Gbm);

    // First index usable as a training row: enough lag and covariate
    // history, and a full week before its day anchor.
    let anchor_of = |t: usize| t - (start_offset + t) % STEPS_PER_DAY;
    let mut first_row = *lags.last().expect("validated lags are nonempty");
    first_row = first_row.max(cfg.window.covariate_lookback);
    while first_row < split && anchor_of(first_row) < STEPS_PER_WEEK {
        first_row += 1;
    }

    let mut linreg = None;
    let mut gbm = None;
    if needs_regression {
        if first_row >= split {
            return Err(ForecastError::InsufficientHistory(format!(
                "training span ends at {split} but the first usable row is {first_row}"
            )));
        }
        let train = build_supervised(series, frame, &cfg.window, first_row..split)?;
        if kinds.contains(&ModelKind::LinReg) {
            linreg = Some(fit_linreg(&train, cfg.ridge_eps)?);
        }
        if kinds.contains(&ModelKind::Gbm) {
            gbm = Some(fit_gbm(&train, &cfg.gbm)?);
        }
    }

    // Every requested model must be able to forecast from every origin,
    // so origins start no earlier than the strictest requirement. The
    // daily-persistence rMAE denominator needs one prior day regardless.
    let mut min_origin = split.max(STEPS_PER_DAY);
    if kinds.contains(&ModelKind::WeeklyNaive) || needs_regression {
        min_origin = min_origin.max(STEPS_PER_WEEK);
    }
    if n < min_origin + horizon {
        return Err(ForecastError::InsufficientHistory(format!(
            "series of {n} steps leaves no day-ahead window after index {min_origin}"
        )));
    }
    let origins: Vec<usize> = (min_origin..=n - horizon)
        .filter(|&o| steps_since_midnight(series.timestamp(o)) == Some(0))
        .collect();
    if origins.is_empty() {
        return Err(ForecastError::InsufficientHistory(
            "no midnight forecast origin fits in the evaluation span".into(),
        ));
    }

    let actual: Vec<Vec<f64>> = origins
        .iter()
        .map(|&o| series.values()[o..o + horizon].to_vec())
        .collect();

    let forecast_all = |kind: ModelKind| -> Result<Vec<Vec<f64>>, ForecastError> {
        origins
            .iter()
            .map(|&o| match kind {
                ModelKind::DailyNaive => forecast_daily_naive(series, o, horizon),
                ModelKind::WeeklyNaive => forecast_weekly_naive(series, o, horizon),
                ModelKind::LinReg | ModelKind::Gbm => {
                    let set = build_supervised(series, frame, &cfg.window, o..o + horizon)?;
                    match kind {
                        ModelKind::LinReg => {
                            predict_linreg(linreg.as_ref().expect("fitted above"), &set)
                        }
                        _ => predict_gbm(gbm.as_ref().expect("fitted above"), &set),
                    }
                }
            })
            .collect()
    };

    let daily_forecasts = forecast_all(ModelKind::DailyNaive)?;
    let (_, daily_mae) = pooled_against(&actual, &daily_forecasts);

    let mut scores = BTreeMap::new();
    let mut forecasts = BTreeMap::new();
    for &kind in &kinds {
        let preds = if kind == ModelKind::DailyNaive {
            daily_forecasts.clone()
        } else {
            forecast_all(kind)?
        };
        let (rmse, mae) = pooled_against(&actual, &preds);
        let rmae = if daily_mae == 0.0 {
            if mae == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            mae / daily_mae
        };
        scores.insert(kind, ModelScore { rmse, mae, rmae });
        forecasts.insert(kind, preds);
    }

    Ok(ForecastReport {
        building_id: series.building_id().into(),
        split_index: split,
        split_timestamp: series.timestamp(split),
        origins,
        scores,
        forecasts,
    })
}

/// Write pooled scores as CSV rows `building_id,model,rmse,mae,rmae`,
/// ordered by building id and then model.
pub fn write_scores_csv<W: Write>(
    reports: &[ForecastReport],
    writer: W,
) -> Result<(), ForecastError> {
    let mut rows: Vec<(&str, ModelKind, &ModelScore)> = reports
        .iter()
        .flat_map(|r| {
            r.scores
                .iter()
                .map(move |(k, s)| (r.building_id.as_str(), *k, s))
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.cmp(&b.1)));

    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["building_id", "model", "rmse", "mae", "rmae"])?;
    for (building_id, kind, score) in rows {
        out.write_record([
            building_id,
            kind.name(),
            &score.rmse.to_string(),
            &score.mae.to_string(),
            &score.rmae.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{align_covariates, WeatherSeries};
    use chrono::{Duration, TimeZone, Utc};

    const ALL: [ModelKind; 4] = ModelKind::ALL;

    fn series_and_frame(
        values: Vec<f64>,
        temp: impl Fn(usize) -> f64,
    ) -> (LoadSeries, CovariateFrame) {
        let start = Utc.with_ymd_and_hms(2013, 3, 4, 0, 0, 0).unwrap();
        let n = values.len();
        let series = LoadSeries::new("b1", start, values).unwrap();
        let temps: Vec<f64> = (0..n).map(temp).collect();
        let weather = WeatherSeries::new(
            start,
            Duration::minutes(30),
            temps,
            vec![4.0; n],
            vec![2.0; n],
            vec![70.0; n],
        )
        .unwrap();
        let frame = align_covariates(&series, &weather).unwrap();
        (series, frame)
    }

    fn fast_cfg() -> BacktestConfig {
        BacktestConfig {
            gbm: GbmParams {
                n_trees: 10,
                learning_rate: 0.3,
                max_leaves: 8,
                min_samples_leaf: 5,
                seed: 0,
            },
            ..BacktestConfig::default()
        }
    }

    /// Six weeks with period-336 structure: distinct days of week and a
    /// strong intraday shape.
    fn weekly_periodic() -> Vec<f64> {
        (0..6 * STEPS_PER_WEEK)
            .map(|t| {
                let slot = t % STEPS_PER_WEEK;
                let day = slot / STEPS_PER_DAY;
                let step = slot % STEPS_PER_DAY;
                10.0 + 3.0 * day as f64 + (step as f64 * 0.4).sin().abs() * 5.0
            })
            .collect()
    }

    #[test]
    fn weekly_persistence_is_exact_on_periodic_series() {
        let (series, frame) = series_and_frame(weekly_periodic(), |_| 10.0);
        let report = backtest_day_ahead(&series, &frame, &fast_cfg(), &ALL).unwrap();
        assert_eq!(report.scores[&ModelKind::WeeklyNaive].rmse, 0.0);
        assert_eq!(report.scores[&ModelKind::WeeklyNaive].mae, 0.0);
        assert!(report.scores[&ModelKind::DailyNaive].rmse > 0.1);
        assert_eq!(report.best_model(), ModelKind::WeeklyNaive);
    }

    #[test]
    fn linear_covariate_signal_favors_regression() {
        // Aperiodic smooth temperature so persistence cannot track it.
        let temp = |t: usize| 12.0 + 8.0 * (t as f64 * 0.013).sin() + 4.0 * (t as f64 * 0.0041).cos();
        let n = 6 * STEPS_PER_WEEK;
        let values: Vec<f64> = (0..n).map(|t| 40.0 + 3.0 * temp(t)).collect();
        let (series, frame) = series_and_frame(values, temp);
        let report = backtest_day_ahead(&series, &frame, &fast_cfg(), &ALL).unwrap();
        let linreg = report.scores[&ModelKind::LinReg];
        assert!(linreg.rmse < 1e-6, "exact affine signal, got {}", linreg.rmse);
        assert!(linreg.rmse < report.scores[&ModelKind::DailyNaive].rmse);
        assert!(linreg.rmse < report.scores[&ModelKind::WeeklyNaive].rmse);
        assert_eq!(report.best_model(), ModelKind::LinReg);
    }

    #[test]
    fn daily_persistence_rmae_is_one() {
        let (series, frame) = series_and_frame(weekly_periodic(), |_| 10.0);
        let report = backtest_day_ahead(&series, &frame, &fast_cfg(), &ALL).unwrap();
        assert_eq!(report.scores[&ModelKind::DailyNaive].rmae, 1.0);
        // Weekly persistence is perfect here while daily is not.
        assert_eq!(report.scores[&ModelKind::WeeklyNaive].rmae, 0.0);
    }

    #[test]
    fn origins_are_midnights_in_the_evaluation_span() {
        let (series, frame) = series_and_frame(weekly_periodic(), |_| 10.0);
        let report = backtest_day_ahead(&series, &frame, &fast_cfg(), &ALL).unwrap();
        let n = series.len();
        let split = (n as f64 * 0.8).floor() as usize;
        assert_eq!(report.split_index, split);
        assert!(!report.origins.is_empty());
        for &o in &report.origins {
            assert!(o >= split && o + 48 <= n);
            assert_eq!(o % STEPS_PER_DAY, 0, "series starts at midnight");
        }
        // Consecutive midnights, one day apart.
        for pair in report.origins.windows(2) {
            assert_eq!(pair[1] - pair[0], STEPS_PER_DAY);
        }
    }

    #[test]
    fn future_values_do_not_leak_into_forecasts() {
        let values = weekly_periodic();
        let (series, frame) = series_and_frame(values.clone(), |_| 10.0);
        let cfg = fast_cfg();
        let report = backtest_day_ahead(&series, &frame, &cfg, &ALL).unwrap();
        let first_origin = report.origins[0];

        // Perturb everything strictly after the first origin.
        let mut mutated = values;
        for v in mutated.iter_mut().skip(first_origin + 1) {
            *v += 100.0;
        }
        let (mutated_series, mutated_frame) = series_and_frame(mutated, |_| 10.0);
        let mutated_report =
            backtest_day_ahead(&mutated_series, &mutated_frame, &cfg, &ALL).unwrap();

        assert_eq!(mutated_report.origins[0], first_origin);
        for kind in ALL {
            assert_eq!(
                report.forecasts[&kind][0], mutated_report.forecasts[&kind][0],
                "{kind} forecast at the first origin changed"
            );
        }
        // Sanity: later windows do differ, so the perturbation was real.
        assert_ne!(
            report.forecasts[&ModelKind::DailyNaive].last(),
            mutated_report.forecasts[&ModelKind::DailyNaive].last()
        );
    }

    #[test]
    fn backtest_is_deterministic() {
        let (series, frame) = series_and_frame(weekly_periodic(), |t| (t as f64 * 0.01).sin());
        let cfg = fast_cfg();
        let a = backtest_day_ahead(&series, &frame, &cfg, &ALL).unwrap();
        let b = backtest_day_ahead(&series, &frame, &cfg, &ALL).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn short_series_is_rejected() {
        let (series, frame) = series_and_frame(vec![1.0; 400], |_| 10.0);
        assert!(matches!(
            backtest_day_ahead(&series, &frame, &fast_cfg(), &ALL),
            Err(ForecastError::InsufficientHistory(_))
        ));
    }

    #[test]
    fn invalid_split_fraction_is_rejected() {
        let (series, frame) = series_and_frame(weekly_periodic(), |_| 10.0);
        for frac in [0.0, 1.0, -0.5, f64::NAN] {
            let cfg = BacktestConfig {
                split_frac: frac,
                ..fast_cfg()
            };
            assert!(matches!(
                backtest_day_ahead(&series, &frame, &cfg, &ALL),
                Err(ForecastError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn empty_model_list_is_rejected() {
        let (series, frame) = series_and_frame(weekly_periodic(), |_| 10.0);
        assert!(matches!(
            backtest_day_ahead(&series, &frame, &fast_cfg(), &[]),
            Err(ForecastError::InvalidConfig(_))
        ));
    }

    #[test]
    fn naive_only_backtest_skips_regression_fitting() {
        // Short series: enough for persistence but not for a training
        // span, which only matters when a regression model is requested.
        let values = weekly_periodic()[..2 * STEPS_PER_WEEK].to_vec();
        let (series, frame) = series_and_frame(values, |_| 10.0);
        let cfg = BacktestConfig {
            split_frac: 0.55,
            ..fast_cfg()
        };
        let report =
            backtest_day_ahead(&series, &frame, &cfg, &[ModelKind::WeeklyNaive]).unwrap();
        assert_eq!(report.scores.len(), 1);
        assert_eq!(report.scores[&ModelKind::WeeklyNaive].rmse, 0.0);
    }

    #[test]
    fn scores_csv_is_ordered_and_exact() {
        let score = |rmse: f64| ModelScore {
            rmse,
            mae: rmse / 2.0,
            rmae: 1.0,
        };
        let report = |id: &str, rmse: f64| ForecastReport {
            building_id: id.into(),
            split_index: 0,
            split_timestamp: Utc.with_ymd_and_hms(2013, 3, 4, 0, 0, 0).unwrap(),
            origins: vec![],
            scores: BTreeMap::from([
                (ModelKind::Gbm, score(rmse)),
                (ModelKind::DailyNaive, score(rmse + 1.0)),
            ]),
            forecasts: BTreeMap::new(),
        };
        // Reports arrive unsorted; rows come out sorted.
        let reports = vec![report("b2", 2.0), report("b1", 0.5)];
        let mut buf = Vec::new();
        write_scores_csv(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "building_id,model,rmse,mae,rmae\n\
             b1,daily_naive,1.5,0.75,1\n\
             b1,gbm,0.5,0.25,1\n\
             b2,daily_naive,3,1.5,1\n\
             b2,gbm,2,1,1\n"
        );
    }
}
