//! Best-forecaster labeling and the random-forest meta-classifier.
//!
//! [`make_labels`] turns backtest reports into per-building labels (the
//! lowest-RMSE [`ModelKind`]), [`LabeledMatrix`] attaches them to a
//! feature matrix, [`split_75_25`] produces the stratified train/test
//! partition, and the `forest`/`cv` submodules train and tune the
//! classifier that predicts the label from features alone.

mod cv;
mod forest;
mod tree;

pub use cv::{default_grid, grid_search_cv, CandidateResult, FeaturesPerSplit, GridSearchResult, GridSpec};
pub use forest::{
    fit_forest, predict_forest, predict_rows, top_k_importances, ForestModel, ForestParams,
    FOREST_MODEL_VERSION,
};
pub use tree::{ClassTree, TreeNode};

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{FeatureMatrix, NanRepair};
use crate::forecast::{ForecastReport, ModelKind};

#[derive(Debug, Error)]
pub enum SelectorError {
    #[error("report for {building_id} does not score {model}")]
    MissingScore {
        building_id: String,
        model: ModelKind,
    },
    #[error("two reports for building {building_id}")]
    DuplicateBuilding { building_id: String },
    #[error("no label for building {building_id}")]
    MissingLabel { building_id: String },
    #[error("{rows} rows are too few: {needed} needed for {what}")]
    TooFewRows {
        rows: usize,
        needed: usize,
        what: &'static str,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{0}")]
    EmptyInput(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn kind_index(kind: ModelKind) -> usize {
    kind as usize
}

/// Label every building with its lowest-RMSE model; exact RMSE ties break
/// toward the earlier (simpler) [`ModelKind`].
pub fn make_labels(
    reports: &[ForecastReport],
) -> Result<BTreeMap<String, ModelKind>, SelectorError> {
    let mut labels = BTreeMap::new();
    for report in reports {
        for kind in ModelKind::ALL {
            if !report.scores.contains_key(&kind) {
                return Err(SelectorError::MissingScore {
                    building_id: report.building_id.clone(),
                    model: kind,
                });
            }
        }
        let label = report.best_model();
        if labels.insert(report.building_id.clone(), label).is_some() {
            return Err(SelectorError::DuplicateBuilding {
                building_id: report.building_id.clone(),
            });
        }
    }
    Ok(labels)
}

/// A feature matrix where every row carries its target [`ModelKind`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    matrix: FeatureMatrix,
    labels: Vec<ModelKind>,
}

impl LabeledMatrix {
    pub fn new(matrix: FeatureMatrix, labels: Vec<ModelKind>) -> Self {
        assert_eq!(matrix.n_rows(), labels.len(), "one label per row");
        Self { matrix, labels }
    }

    /// Join a matrix with a label map; every building must be labeled.
    pub fn attach(
        matrix: FeatureMatrix,
        labels: &BTreeMap<String, ModelKind>,
    ) -> Result<Self, SelectorError> {
        let row_labels = matrix
            .building_ids()
            .iter()
            .map(|id| {
                labels
                    .get(id)
                    .copied()
                    .ok_or_else(|| SelectorError::MissingLabel {
                        building_id: id.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(matrix, row_labels))
    }

    pub fn matrix(&self) -> &FeatureMatrix {
        &self.matrix
    }

    pub fn labels(&self) -> &[ModelKind] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn label(&self, i: usize) -> ModelKind {
        self.labels[i]
    }

    /// Per-label row counts in [`ModelKind`] order.
    pub fn label_counts(&self) -> BTreeMap<ModelKind, usize> {
        let mut counts = BTreeMap::new();
        for &label in &self.labels {
            *counts.entry(label).or_insert(0) += 1;
        }
        counts
    }

    /// The feature CSV with a trailing `label` column.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), SelectorError> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["building_id".to_string()];
        header.extend(self.matrix.columns().iter().cloned());
        header.push("label".into());
        out.write_record(&header)?;
        for (i, id) in self.matrix.building_ids().iter().enumerate() {
            let mut record = vec![id.clone()];
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            record.push(self.labels[i].name().into());
            out.write_record(&record)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Select a subset of rows (indices must be sorted and in range).
    fn subset(&self, indices: &[usize]) -> LabeledMatrix {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        let ids: Vec<String> = indices
            .iter()
            .map(|&i| self.matrix.building_ids()[i].clone())
            .collect();
        let mut values = Vec::with_capacity(indices.len() * self.matrix.n_cols());
        for &i in indices {
            values.extend_from_slice(self.matrix.row(i));
        }
        let repairs: Vec<NanRepair> = self
            .matrix
            .repairs()
            .iter()
            .filter(|r| ids.binary_search(&r.building_id).is_ok())
            .cloned()
            .collect();
        LabeledMatrix::new(
            FeatureMatrix::new(
                self.matrix.family(),
                self.matrix.columns().to_vec(),
                ids,
                values,
                repairs,
            ),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Deterministic 75/25 split: train gets `round(0.75 n)` rows. Stratified
/// mode apportions the train quota per class by largest remainder, so
/// class proportions survive within one row. Both halves keep the
/// original (building-id) row order.
pub fn split_75_25(
    m: &LabeledMatrix,
    seed: u64,
    stratified: bool,
) -> Result<(LabeledMatrix, LabeledMatrix), SelectorError> {
    let n = m.n_rows();
    if n < 4 {
        return Err(SelectorError::TooFewRows {
            rows: n,
            needed: 4,
            what: "a 75/25 split",
        });
    }
    let target = (0.75 * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx: Vec<usize> = Vec::with_capacity(target);

    if stratified {
        let mut take = vec![0_usize; ModelKind::ALL.len()];
        let mut counts = vec![0_usize; ModelKind::ALL.len()];
        for &label in &m.labels {
            counts[kind_index(label)] += 1;
        }
        let mut fractions: Vec<(usize, f64)> = Vec::new();
        let mut assigned = 0;
        for (c, &count) in counts.iter().enumerate() {
            let quota = target as f64 * count as f64 / n as f64;
            take[c] = quota.floor() as usize;
            assigned += take[c];
            fractions.push((c, quota - quota.floor()));
        }
        // Largest remainder first; remainder ties toward earlier classes.
        fractions.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut short = target - assigned;
        while short > 0 {
            for &(c, _) in &fractions {
                if short > 0 && take[c] < counts[c] {
                    take[c] += 1;
                    short -= 1;
                }
            }
        }
        for kind in ModelKind::ALL {
            let c = kind_index(kind);
            let mut members: Vec<usize> = (0..n).filter(|&i| m.labels[i] == kind).collect();
            members.shuffle(&mut rng);
            train_idx.extend(&members[..take[c]]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        train_idx.extend(&all[..target]);
    }

    train_idx.sort_unstable();
    let test_idx: Vec<usize> = (0..n).filter(|i| train_idx.binary_search(i).is_err()).collect();
    Ok((m.subset(&train_idx), m.subset(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureFamily;
    use crate::forecast::ModelScore;
    use proptest::prelude::*;

    fn report(id: &str, rmse: [f64; 4]) -> ForecastReport {
        ForecastReport {
            building_id: id.into(),
            split_index: 0,
            split_timestamp: chrono::DateTime::UNIX_EPOCH,
            origins: vec![],
            scores: ModelKind::ALL
                .into_iter()
                .zip(rmse)
                .map(|(kind, rmse)| {
                    (
                        kind,
                        ModelScore {
                            rmse,
                            mae: rmse,
                            rmae: 1.0,
                        },
                    )
                })
                .collect(),
            forecasts: BTreeMap::new(),
        }
    }

    pub(super) fn toy_matrix(labels: &[ModelKind]) -> LabeledMatrix {
        let ids: Vec<String> = (0..labels.len()).map(|i| format!("b{i:03}")).collect();
        let values: Vec<f64> = (0..labels.len() * 2).map(|v| v as f64).collect();
        LabeledMatrix::new(
            FeatureMatrix::new(
                FeatureFamily::DomainAgnostic,
                vec!["f0".into(), "f1".into()],
                ids,
                values,
                vec![],
            ),
            labels.to_vec(),
        )
    }

    #[test]
    fn labels_take_the_argmin_rmse() {
        let reports = vec![report("b1", [1.2, 1.1, 0.8, 0.9])];
        let labels = make_labels(&reports).unwrap();
        assert_eq!(labels["b1"], ModelKind::LinReg);
    }

    #[test]
    fn rmse_ties_break_by_model_order() {
        let reports = vec![report("b1", [1.0, 1.0, 0.8, 0.8])];
        assert_eq!(make_labels(&reports).unwrap()["b1"], ModelKind::LinReg);
        let reports = vec![report("b2", [1.0, 1.0, 1.0, 1.0])];
        assert_eq!(make_labels(&reports).unwrap()["b2"], ModelKind::DailyNaive);
    }

    #[test]
    fn missing_score_and_duplicate_rejected() {
        let mut incomplete = report("b1", [1.0, 1.0, 1.0, 1.0]);
        incomplete.scores.remove(&ModelKind::Gbm);
        assert!(matches!(
            make_labels(&[incomplete]),
            Err(SelectorError::MissingScore {
                model: ModelKind::Gbm,
                ..
            })
        ));
        let duplicated = vec![report("b1", [1.0, 2.0, 3.0, 4.0]); 2];
        assert!(matches!(
            make_labels(&duplicated),
            Err(SelectorError::DuplicateBuilding { .. })
        ));
    }

    #[test]
    fn attach_requires_every_building() {
        let m = toy_matrix(&[ModelKind::Gbm, ModelKind::LinReg]);
        let mut labels = BTreeMap::new();
        labels.insert("b000".to_string(), ModelKind::Gbm);
        assert!(matches!(
            LabeledMatrix::attach(m.matrix().clone(), &labels),
            Err(SelectorError::MissingLabel { .. })
        ));
        labels.insert("b001".to_string(), ModelKind::LinReg);
        let attached = LabeledMatrix::attach(m.matrix().clone(), &labels).unwrap();
        assert_eq!(attached.labels(), m.labels());
    }

    #[test]
    fn split_sizes_are_75_25() {
        let labels: Vec<ModelKind> = (0..100)
            .map(|i| ModelKind::ALL[i % 2 + 2])
            .collect();
        let (train, test) = split_75_25(&toy_matrix(&labels), 7, true).unwrap();
        assert_eq!(train.n_rows(), 75);
        assert_eq!(test.n_rows(), 25);
    }

    #[test]
    fn stratified_split_hand_example() {
        // 8 Gbm + 4 LinReg, train target 9 → 6 + 3.
        let mut labels = vec![ModelKind::Gbm; 8];
        labels.extend(vec![ModelKind::LinReg; 4]);
        let (train, test) = split_75_25(&toy_matrix(&labels), 123, true).unwrap();
        let counts = train.label_counts();
        assert_eq!(counts[&ModelKind::Gbm], 6);
        assert_eq!(counts[&ModelKind::LinReg], 3);
        assert_eq!(test.label_counts()[&ModelKind::Gbm], 2);
        assert_eq!(test.label_counts()[&ModelKind::LinReg], 1);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let labels: Vec<ModelKind> = (0..37).map(|i| ModelKind::ALL[i % 4]).collect();
        let m = toy_matrix(&labels);
        let (train_a, test_a) = split_75_25(&m, 99, true).unwrap();
        let (train_b, test_b) = split_75_25(&m, 99, true).unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);

        let mut ids: Vec<&String> = train_a
            .matrix()
            .building_ids()
            .iter()
            .chain(test_a.matrix().building_ids())
            .collect();
        ids.sort();
        let all: Vec<&String> = m.matrix().building_ids().iter().collect();
        assert_eq!(ids, all);

        let (train_c, _) = split_75_25(&m, 100, true).unwrap();
        assert_ne!(
            train_a.matrix().building_ids(),
            train_c.matrix().building_ids(),
            "different seeds should usually pick different rows"
        );
    }

    #[test]
    fn split_rejects_tiny_matrices() {
        let m = toy_matrix(&[ModelKind::Gbm; 3]);
        assert!(matches!(
            split_75_25(&m, 1, true),
            Err(SelectorError::TooFewRows { rows: 3, .. })
        ));
    }

    #[test]
    fn labeled_csv_has_trailing_label_column() {
        let m = toy_matrix(&[ModelKind::Gbm, ModelKind::DailyNaive]);
        let mut buf = Vec::new();
        m.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "building_id,f0,f1,label\n\
             b000,0,1,gbm\n\
             b001,2,3,daily_naive\n"
        );
    }

    proptest! {
        #[test]
        fn labels_invariant_under_positive_rmse_scaling(
            rmse in prop::collection::vec(0.01_f64..100.0, 4),
            scale in 0.001_f64..1000.0,
        ) {
            let base = report("b1", [rmse[0], rmse[1], rmse[2], rmse[3]]);
            let scaled = report(
                "b1",
                [rmse[0] * scale, rmse[1] * scale, rmse[2] * scale, rmse[3] * scale],
            );
            // Scaling can reorder exact ties through rounding; skip those.
            let mut sorted = rmse.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| (w[1] - w[0]) / w[1] > 1e-9));
            prop_assert_eq!(
                make_labels(&[base]).unwrap()["b1"],
                make_labels(&[scaled]).unwrap()["b1"]
            );
        }

        #[test]
        fn stratified_split_preserves_proportions_within_one(
            counts in prop::collection::vec(1_usize..20, 4),
        ) {
            let mut labels = Vec::new();
            for (kind, &count) in ModelKind::ALL.into_iter().zip(&counts) {
                labels.extend(std::iter::repeat(kind).take(count));
            }
            prop_assume!(labels.len() >= 4);
            let m = toy_matrix(&labels);
            let (train, _) = split_75_25(&m, 5, true).unwrap();
            let target = (0.75 * labels.len() as f64).round();
            for (kind, &count) in ModelKind::ALL.into_iter().zip(&counts) {
                let got = train.label_counts().get(&kind).copied().unwrap_or(0) as f64;
                let ideal = target * count as f64 / labels.len() as f64;
                prop_assert!(
                    (got - ideal).abs() <= 1.0 + 1e-9,
                    "class {kind}: got {got}, ideal {ideal}"
                );
            }
        }
    }
}
