//! Forecastability analysis for building electricity demand.
//!
//! The library implements a four-stage workflow over a corpus of half-hourly
//! smart-meter series:
//!
//! 1. [`forecast`] backtests four day-ahead forecasters per building.
//! 2. [`features`] turns each series into named feature vectors from two
//!    documented registries (load-shape and generic statistics).
//! 3. [`selector::make_labels`] tags each building with its lowest-RMSE
//!    forecaster.
//! 4. [`selector`] trains a random-forest classifier that predicts that
//!    label from the features alone.
//!
//! [`ingest`] parses and cleans raw meter/weather files, [`metrics`] houses
//! the shared error measures, and [`pipeline`] wires the stages into a
//! cached, deterministic artifact flow behind the CLI.

pub mod features;
pub mod forecast;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod selector;

pub use forecast::ModelKind;
pub use ingest::{Corpus, CovariateFrame, LoadSeries};
