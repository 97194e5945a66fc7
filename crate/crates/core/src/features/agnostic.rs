//! Domain-agnostic statistical features.
//!
//! Generic time-series statistics that read only the values, never the
//! clock. Order and definitions live in [`AGNOSTIC_REGISTRY`].

use super::{stats, FeatureError, FeatureFamily, FeatureVector, AGNOSTIC_REGISTRY};
use crate::ingest::{LoadSeries, STEPS_PER_DAY};

pub fn extract_domain_agnostic(series: &LoadSeries) -> Result<FeatureVector, FeatureError> {
    let x = series.values();
    let n = x.len();
    if n < 2 * STEPS_PER_DAY {
        return Err(FeatureError::TooShort {
            building_id: series.building_id().into(),
            needed: 2 * STEPS_PER_DAY,
            got: n,
            what: "domain-agnostic features (two stability windows)",
        });
    }
    let mu = stats::mean(x);
    let variance = stats::population_variance(x);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let values = vec![
        n as f64,
        mu,
        variance,
        stats::skewness(x),
        max,
        min,
        stats::sparsity(x),
        stats::stability(x, STEPS_PER_DAY),
        stats::lumpiness(x, STEPS_PER_DAY),
        stats::autocorrelation(x, 1),
        stats::autocorrelation(x, STEPS_PER_DAY),
        stats::crossing_points(x),
        stats::flat_spots(x),
        variance.sqrt() / mu,
        max / mu,
    ];
    Ok(FeatureVector::from_registry(
        FeatureFamily::DomainAgnostic,
        &AGNOSTIC_REGISTRY,
        values,
    ))
}
