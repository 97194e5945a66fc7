//! Preprocessing rules: nearest-neighbor gap filling and the zero-mean
//! discard.

use super::{Corpus, IngestError, LoadSeries, RawSeries};

/// Replace every missing value with the value at the nearest (by index
/// distance) observed position. Equidistant ties resolve toward the
/// earlier neighbor, so past readings are preferred over future ones.
pub fn impute_nearest(raw: &RawSeries) -> Result<LoadSeries, IngestError> {
    let n = raw.values.len();
    // before[i]: nearest observed value at index ≤ i and its distance.
    let mut before: Vec<Option<(usize, f64)>> = Vec::with_capacity(n);
    let mut last: Option<(usize, f64)> = None;
    for (i, value) in raw.values.iter().enumerate() {
        if let Some(v) = value {
            last = Some((i, *v));
        }
        before.push(last.map(|(j, v)| (i - j, v)));
    }
    if last.is_none() {
        return Err(IngestError::AllMissing {
            series_id: raw.building_id.clone(),
        });
    }
    let mut after: Vec<Option<(usize, f64)>> = vec![None; n];
    let mut next: Option<(usize, f64)> = None;
    for (i, value) in raw.values.iter().enumerate().rev() {
        if let Some(v) = value {
            next = Some((i, *v));
        }
        after[i] = next.map(|(j, v)| (j - i, v));
    }
    let values = (0..n)
        .map(|i| match (before[i], after[i]) {
            (Some((db, vb)), Some((da, va))) => {
                if db <= da {
                    vb
                } else {
                    va
                }
            }
            (Some((_, vb)), None) => vb,
            (None, Some((_, va))) => va,
            (None, None) => unreachable!("at least one observed value exists"),
        })
        .collect();
    LoadSeries::new(raw.building_id.clone(), raw.start, values)
}

/// Drop every building whose mean consumption is zero; the discard list is
/// returned for audit. Values are non-negative, so mean zero means the
/// series is identically zero (or empty).
pub fn discard_zero_mean(corpus: Corpus) -> (Corpus, Vec<String>) {
    let mut retained = Corpus::new();
    let mut discarded = Vec::new();
    for (id, building) in corpus.buildings {
        if building.series.mean() > 0.0 {
            retained.buildings.insert(id, building);
        } else {
            discarded.push(id);
        }
    }
    (retained, discarded)
}
