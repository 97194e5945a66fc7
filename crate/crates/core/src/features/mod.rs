//! Per-series feature extraction behind two documented registries.
//!
//! Each building's load series becomes a named feature vector from one of
//! two catalogs: domain-informed load-shape statistics ([`informed`
//! registry](INFORMED_REGISTRY)) and domain-agnostic time-series
//! statistics ([`agnostic` registry](AGNOSTIC_REGISTRY)), or their
//! prefixed concatenation. [`assemble_matrix`] stacks the vectors into a
//! buildings × features matrix, repairing non-finite cells with the
//! column median and logging every repair.
//!
//! Extending a registry means appending a [`FeatureSpec`] and computing
//! its value at the matching position in the extractor; the matrix, CSV,
//! and schema layers derive everything else from the registry.

mod agnostic;
mod informed;
pub mod stats;

pub use agnostic::extract_domain_agnostic;
pub use informed::extract_domain_informed;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Building, Corpus};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("series {building_id} too short for {what}: {got} steps, {needed} needed")]
    TooShort {
        building_id: String,
        needed: usize,
        got: usize,
        what: &'static str,
    },
    #[error("series {building_id} does not start on a civil half-hour, day blocks are undefined")]
    Misaligned { building_id: String },
    #[error("series {building_id} has {series_len} steps but its covariate frame has {frame_len}")]
    FrameMismatch {
        building_id: String,
        series_len: usize,
        frame_len: usize,
    },
    #[error("cannot assemble a feature matrix from an empty corpus")]
    EmptyCorpus,
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Which catalog a vector or matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureFamily {
    #[serde(rename = "informed")]
    DomainInformed,
    #[serde(rename = "agnostic")]
    DomainAgnostic,
    #[serde(rename = "combined")]
    Combined,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 3] = [
        FeatureFamily::DomainInformed,
        FeatureFamily::DomainAgnostic,
        FeatureFamily::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureFamily::DomainInformed => "informed",
            FeatureFamily::DomainAgnostic => "agnostic",
            FeatureFamily::Combined => "combined",
        }
    }
}

impl std::fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureFamily::ALL
            .into_iter()
            .find(|family| family.name() == s)
            .ok_or_else(|| format!("unknown feature family {s:?}"))
    }
}

/// How a feature responds to rescaling the series by a factor c > 0:
/// unchanged, ×c, ×c², or ×c⁴. Declared per registry entry so scaling
/// behavior is property-testable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingClass {
    Invariant,
    Linear,
    Quadratic,
    Quartic,
}

/// One registry entry: a feature's name, written definition, and scaling
/// class.
#[derive(Debug, Clone, Copy)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub definition: &'static str,
    pub scaling: ScalingClass,
}

/// Generic time-series statistics, computable from the values alone.
pub const AGNOSTIC_REGISTRY: [FeatureSpec; 15] = [
    FeatureSpec {
        name: "series_length",
        definition: "Number of half-hourly observations.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "mean",
        definition: "Arithmetic mean of all values.",
        scaling: ScalingClass::Linear,
    },
    FeatureSpec {
        name: "variance",
        definition: "Population variance of all values.",
        scaling: ScalingClass::Quadratic,
    },
    FeatureSpec {
        name: "skewness",
        definition: "Population skewness m3/m2^(3/2); 0 when the variance is 0.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "max",
        definition: "Largest value.",
        scaling: ScalingClass::Linear,
    },
    FeatureSpec {
        name: "min",
        definition: "Smallest value.",
        scaling: ScalingClass::Linear,
    },
    FeatureSpec {
        name: "sparsity",
        definition: "Fraction of exact zeros.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "stability",
        definition: "Population variance of the means of non-overlapping 48-step windows.",
        scaling: ScalingClass::Quadratic,
    },
    FeatureSpec {
        name: "lumpiness",
        definition: "Population variance of the population variances of non-overlapping 48-step windows.",
        scaling: ScalingClass::Quartic,
    },
    FeatureSpec {
        name: "acf_lag1",
        definition: "Population autocorrelation at lag 1; 0 when the variance is 0.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "acf_lag48",
        definition: "Population autocorrelation at lag 48 (one day); 0 when the variance is 0.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "crossing_points",
        definition: "Mean-crossing count over adjacent pairs, divided by n-1.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "flat_spots",
        definition: "Longest run of equal consecutive values, divided by n.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "coef_of_variation",
        definition: "Population standard deviation divided by the mean.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "range_ratio",
        definition: "Largest value divided by the mean.",
        scaling: ScalingClass::Invariant,
    },
];

/// Load-shape statistics that read the clock and calendar. "Complete
/// days" are the midnight-aligned 48-step blocks inside the series.
pub const INFORMED_REGISTRY: [FeatureSpec; 16] = [
    FeatureSpec {
        name: "mean_daily_consumption",
        definition: "Mean over complete days of the day's total consumption.",
        scaling: ScalingClass::Linear,
    },
    FeatureSpec {
        name: "peak_value",
        definition: "Largest value in the series.",
        scaling: ScalingClass::Linear,
    },
    FeatureSpec {
        name: "base_load",
        definition: "2nd percentile (nearest rank) of all values.",
        scaling: ScalingClass::Linear,
    },
    FeatureSpec {
        name: "load_factor",
        definition: "Mean value divided by the peak value.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "mean_peak_hour",
        definition: "Mean over complete days of the hour of day (0-23) of the day's maximum slot; ties to the earliest slot.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "evening_share",
        definition: "Fraction of complete-day energy consumed between 18:00 and 22:00.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "overnight_share",
        definition: "Fraction of complete-day energy consumed between 00:00 and 06:00.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "weekday_weekend_ratio",
        definition: "Mean over weekday steps divided by mean over weekend steps, within complete days.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "mean_winter",
        definition: "Mean over steps falling in December-February; 0 when the season is absent.",
        scaling: ScalingClass::Linear,
    },
    FeatureSpec {
        name: "mean_spring",
        definition: "Mean over steps falling in March-May; 0 when the season is absent.",
        scaling: ScalingClass::Linear,
    },
    FeatureSpec {
        name: "mean_summer",
        definition: "Mean over steps falling in June-August; 0 when the season is absent.",
        scaling: ScalingClass::Linear,
    },
    FeatureSpec {
        name: "mean_autumn",
        definition: "Mean over steps falling in September-November; 0 when the season is absent.",
        scaling: ScalingClass::Linear,
    },
    FeatureSpec {
        name: "weekly_seasonality_strength",
        definition: "1 - var(residual after subtracting the mean weekly profile)/var(series) over complete days, clamped to [0,1]; 0 when the variance is 0.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "daily_profile_skewness",
        definition: "Population skewness of the 48-slot mean daily profile.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "peak_to_base_ratio",
        definition: "Peak value divided by the base load.",
        scaling: ScalingClass::Invariant,
    },
    FeatureSpec {
        name: "daily_range_mean",
        definition: "Mean over complete days of the day's max minus the day's min.",
        scaling: ScalingClass::Linear,
    },
];

/// An ordered feature_name → value mapping for one building.
///
/// Values may be transiently non-finite (degenerate ratios); they become
/// finite once [`assemble_matrix`] applies the median repair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector {
    family: FeatureFamily,
    names: Vec<String>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(family: FeatureFamily, names: Vec<String>, values: Vec<f64>) -> Self {
        assert_eq!(names.len(), values.len(), "one value per name");
        debug_assert!(
            {
                let mut sorted = names.clone();
                sorted.sort();
                sorted.windows(2).all(|w| w[0] != w[1])
            },
            "feature names must be unique"
        );
        Self {
            family,
            names,
            values,
        }
    }

    fn from_registry(family: FeatureFamily, registry: &[FeatureSpec], values: Vec<f64>) -> Self {
        assert_eq!(registry.len(), values.len());
        Self::new(
            family,
            registry.iter().map(|spec| spec.name.to_string()).collect(),
            values,
        )
    }

    pub fn family(&self) -> FeatureFamily {
        self.family
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }
}

/// Concatenate two base-family vectors into a `Combined` vector whose
/// names carry their source family as a prefix ("informed.peak_value").
pub fn combine(a: &FeatureVector, b: &FeatureVector) -> FeatureVector {
    assert_ne!(
        a.family,
        FeatureFamily::Combined,
        "combine takes base-family vectors"
    );
    assert_ne!(
        b.family,
        FeatureFamily::Combined,
        "combine takes base-family vectors"
    );
    assert_ne!(a.family, b.family, "combine needs disjoint families");
    let names: Vec<String> = a
        .names
        .iter()
        .map(|n| format!("{}.{n}", a.family.name()))
        .chain(b.names.iter().map(|n| format!("{}.{n}", b.family.name())))
        .collect();
    let values: Vec<f64> = a.values.iter().chain(b.values.iter()).copied().collect();
    // Distinct prefixes make collisions impossible; `new` still asserts.
    FeatureVector::new(FeatureFamily::Combined, names, values)
}

/// One column of the machine-readable schema sidecar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemaEntry {
    pub name: String,
    pub definition: String,
    pub scaling: ScalingClass,
    pub family: FeatureFamily,
}

/// The ordered column schema of a family's matrix. Combined columns keep
/// their source family and prefixed name.
pub fn schema(family: FeatureFamily) -> Vec<SchemaEntry> {
    let base = |registry: &[FeatureSpec], family: FeatureFamily, prefix: bool| {
        registry
            .iter()
            .map(|spec| SchemaEntry {
                name: if prefix {
                    format!("{}.{}", family.name(), spec.name)
                } else {
                    spec.name.to_string()
                },
                definition: spec.definition.to_string(),
                scaling: spec.scaling,
                family,
            })
            .collect::<Vec<_>>()
    };
    match family {
        FeatureFamily::DomainInformed => base(&INFORMED_REGISTRY, family, false),
        FeatureFamily::DomainAgnostic => base(&AGNOSTIC_REGISTRY, family, false),
        FeatureFamily::Combined => {
            let mut entries = base(&INFORMED_REGISTRY, FeatureFamily::DomainInformed, true);
            entries.extend(base(&AGNOSTIC_REGISTRY, FeatureFamily::DomainAgnostic, true));
            entries
        }
    }
}

/// Extract one building's vector for any family. Combined concatenates
/// informed then agnostic, matching [`schema`] order.
pub fn extract_for_family(
    building: &Building,
    family: FeatureFamily,
) -> Result<FeatureVector, FeatureError> {
    match family {
        FeatureFamily::DomainInformed => {
            extract_domain_informed(&building.series, &building.frame)
        }
        FeatureFamily::DomainAgnostic => extract_domain_agnostic(&building.series),
        FeatureFamily::Combined => {
            let informed = extract_domain_informed(&building.series, &building.frame)?;
            let agnostic = extract_domain_agnostic(&building.series)?;
            Ok(combine(&informed, &agnostic))
        }
    }
}

/// One median repair of a non-finite cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NanRepair {
    pub building_id: String,
    pub feature: String,
    /// The replaced value, printed ("NaN", "inf", "-inf").
    pub original: String,
    pub replaced_with: f64,
}

/// Buildings × features, rows sorted by building id, all cells finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureMatrix {
    family: FeatureFamily,
    columns: Vec<String>,
    building_ids: Vec<String>,
    /// Row-major, `building_ids.len() * columns.len()` cells.
    values: Vec<f64>,
    repairs: Vec<NanRepair>,
}

impl FeatureMatrix {
    /// Build a matrix from row-major values. Panics unless
    /// `values.len() == columns.len() * building_ids.len()`.
    pub fn new(
        family: FeatureFamily,
        columns: Vec<String>,
        building_ids: Vec<String>,
        values: Vec<f64>,
        repairs: Vec<NanRepair>,
    ) -> Self {
        assert_eq!(values.len(), columns.len() * building_ids.len());
        Self {
            family,
            columns,
            building_ids,
            values,
            repairs,
        }
    }

    pub fn family(&self) -> FeatureFamily {
        self.family
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn building_ids(&self) -> &[String] {
        &self.building_ids
    }

    pub fn n_rows(&self) -> usize {
        self.building_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols()..(i + 1) * self.n_cols()]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols().max(1))
    }

    /// The audit log of median repairs applied during assembly.
    pub fn repairs(&self) -> &[NanRepair] {
        &self.repairs
    }

    /// CSV with header `building_id,<feature names...>`.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), FeatureError> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["building_id".to_string()];
        header.extend(self.columns.iter().cloned());
        out.write_record(&header)?;
        for (i, id) in self.building_ids.iter().enumerate() {
            let mut record = vec![id.clone()];
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            out.write_record(&record)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Extract every building's vector for `family` and stack them, repairing
/// non-finite cells with the column median over finite cells (0 when the
/// whole column is non-finite) and auditing every repair.
pub fn assemble_matrix(corpus: &Corpus, family: FeatureFamily) -> Result<FeatureMatrix, FeatureError> {
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let buildings: Vec<(&str, &Building)> = corpus.iter().collect();
    let extracted: Vec<FeatureVector> = buildings
        .par_iter()
        .map(|(_, building)| extract_for_family(building, family))
        .collect::<Result<_, _>>()?;

    let columns: Vec<String> = extracted[0].names().to_vec();
    debug_assert!(extracted.iter().all(|v| v.names() == columns.as_slice()));
    let building_ids: Vec<String> = buildings.iter().map(|(id, _)| (*id).to_string()).collect();
    let n_cols = columns.len();
    let mut values: Vec<f64> = Vec::with_capacity(building_ids.len() * n_cols);
    for vector in &extracted {
        values.extend_from_slice(vector.values());
    }

    let mut repairs = Vec::new();
    for j in 0..n_cols {
        let finite: Vec<f64> = (0..building_ids.len())
            .map(|i| values[i * n_cols + j])
            .filter(|v| v.is_finite())
            .collect();
        let replacement = if finite.is_empty() {
            0.0
        } else {
            stats::median(&finite)
        };
        for (i, id) in building_ids.iter().enumerate() {
            let cell = &mut values[i * n_cols + j];
            if !cell.is_finite() {
                repairs.push(NanRepair {
                    building_id: id.clone(),
                    feature: columns[j].clone(),
                    original: cell.to_string(),
                    replaced_with: replacement,
                });
                *cell = replacement;
            }
        }
    }

    Ok(FeatureMatrix::new(
        family,
        columns,
        building_ids,
        values,
        repairs,
    ))
}
