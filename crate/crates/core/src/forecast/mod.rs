//! Day-ahead forecasters and their backtest harness.
//!
//! Four models compete per building: two persistence baselines
//! ([`forecast_daily_naive`], [`forecast_weekly_naive`]), a multiple linear
//! regression ([`fit_linreg`]) and a leaf-wise gradient-boosted tree
//! ensemble ([`fit_gbm`]). [`backtest_day_ahead`] scores all of them over
//! every test-region midnight with a 48-step horizon.

mod backtest;
mod gbm;
mod linreg;
mod naive;
mod supervised;

pub use backtest::{backtest_day_ahead, write_scores_csv, BacktestConfig, ForecastReport, ModelScore};
pub use gbm::{fit_gbm, predict_gbm, GbmModel, GbmNode, GbmParams, GbmTree};
pub use linreg::{fit_linreg, predict_linreg, LinRegModel, DEFAULT_RIDGE_EPS};
pub use naive::{forecast_daily_naive, forecast_weekly_naive};
pub use supervised::{build_supervised, SupervisedSet};

pub(crate) use supervised::steps_since_midnight;

use crate::ingest::{STEPS_PER_DAY, STEPS_PER_WEEK};
use crate::metrics::MetricsError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("invalid window config: {0}")]
    InvalidConfig(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("series {building_id} is not aligned to civil half-hours, day anchoring is undefined")]
    MisalignedSeries { building_id: String },
    #[error("horizon {horizon} exceeds persistence period {period}, forecast would read unknown values")]
    InvalidHorizon { horizon: usize, period: usize },
    #[error("{rows} rows cannot determine {needed} coefficients")]
    TooFewRows { rows: usize, needed: usize },
    #[error("design matrix is degenerate even with ridge regularization")]
    DegenerateDesign,
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("supervised set is empty")]
    EmptySet,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// The four competing forecasters. The declaration order is the total
/// order used for every deterministic tie-break (simpler model wins).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum ModelKind {
    #[serde(rename = "daily_naive")]
    DailyNaive,
    #[serde(rename = "weekly_naive")]
    WeeklyNaive,
    #[serde(rename = "linreg")]
    LinReg,
    #[serde(rename = "gbm")]
    Gbm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::DailyNaive,
        ModelKind::WeeklyNaive,
        ModelKind::LinReg,
        ModelKind::Gbm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DailyNaive => "daily_naive",
            ModelKind::WeeklyNaive => "weekly_naive",
            ModelKind::LinReg => "linreg",
            ModelKind::Gbm => "gbm",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|kind| kind.name() == s)
            .ok_or_else(|| format!("unknown model kind {s:?}"))
    }
}

/// Windowing for the regression forecasters.
///
/// Day-ahead forecasting is direct: every target lag must be at least the
/// horizon, so at a midnight origin the whole forecast day reads strictly
/// historical load. Weather is treated as a perfect forecast up to
/// `covariate_lookforward` steps ahead (it must cover the horizon).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub horizon: usize,
    pub target_lags: Vec<usize>,
    pub covariate_lookback: usize,
    pub covariate_lookforward: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            horizon: STEPS_PER_DAY,
            target_lags: vec![STEPS_PER_DAY, STEPS_PER_WEEK],
            covariate_lookback: STEPS_PER_DAY,
            covariate_lookforward: STEPS_PER_DAY,
        }
    }
}

impl WindowConfig {
    /// Check invariants and return the lags sorted and deduplicated.
    pub fn validated_lags(&self) -> Result<Vec<usize>, ForecastError> {
        if self.horizon == 0 {
            return Err(ForecastError::InvalidConfig("horizon must be positive".into()));
        }
        if self.target_lags.is_empty() {
            return Err(ForecastError::InvalidConfig(
                "at least one target lag is required".into(),
            ));
        }
        let mut lags = self.target_lags.clone();
        lags.sort_unstable();
        lags.dedup();
        if lags[0] < self.horizon {
            return Err(ForecastError::InvalidConfig(format!(
                "min target lag {} is below the horizon {}; direct multi-step forecasting requires lags ≥ horizon",
                lags[0], self.horizon
            )));
        }
        if self.covariate_lookforward < self.horizon {
            return Err(ForecastError::InvalidConfig(format!(
                "covariate lookforward {} cannot supply weather across the {}-step horizon",
                self.covariate_lookforward, self.horizon
            )));
        }
        Ok(lags)
    }

    pub fn max_lag(&self) -> usize {
        self.target_lags.iter().copied().max().unwrap_or(0)
    }
}
