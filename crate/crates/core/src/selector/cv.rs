//! Hyperparameter selection by stratified k-fold cross-validation.
//!
//! Candidates are scored by mean fold accuracy; ties go to the earlier
//! grid entry, and the winner is refit on the full training set. The
//! fold layout and every fit derive from one seed, so the whole search
//! is reproducible.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forecast::ModelKind;

use super::forest::{fit_forest, predict_forest, ForestModel, ForestParams};
use super::{LabeledMatrix, SelectorError};

/// Per-split feature budget, either a fixed count or a rule resolved
/// against the feature dimension at grid expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeaturesPerSplit {
    /// ceil(sqrt(p))
    Sqrt,
    /// max(1, p / 3), integer division
    Third,
    Count(usize),
}

impl FeaturesPerSplit {
    fn resolve(self, p: usize) -> usize {
        match self {
            Self::Sqrt => (p as f64).sqrt().ceil() as usize,
            Self::Third => (p / 3).max(1),
            Self::Count(n) => n.clamp(1, p),
        }
    }
}

impl Serialize for FeaturesPerSplit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Sqrt => s.serialize_str("sqrt"),
            Self::Third => s.serialize_str("third"),
            Self::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for FeaturesPerSplit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(Self::Count(n)),
            Raw::Name(name) => match name.as_str() {
                "sqrt" => Ok(Self::Sqrt),
                "third" => Ok(Self::Third),
                other => Err(serde::de::Error::custom(format!(
                    "unknown features_per_split rule {other:?} (use \"sqrt\", \"third\", or a count)"
                ))),
            },
        }
    }
}

/// Axes of the hyperparameter grid; candidates are the cartesian
/// product, enumerated with `features_per_split` varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_leaf: Vec<usize>,
    pub features_per_split: Vec<FeaturesPerSplit>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_trees: vec![100, 300],
            max_depth: vec![None, Some(8), Some(16)],
            min_samples_leaf: vec![1, 3],
            features_per_split: vec![FeaturesPerSplit::Sqrt, FeaturesPerSplit::Third],
        }
    }
}

impl GridSpec {
    /// Expand against a feature dimension; duplicate candidates are kept
    /// (the tie rule makes them harmless).
    pub fn expand(&self, p: usize) -> Vec<ForestParams> {
        let mut grid = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &min_samples_leaf in &self.min_samples_leaf {
                    for &features in &self.features_per_split {
                        grid.push(ForestParams {
                            n_trees,
                            max_depth,
                            min_samples_leaf,
                            features_per_split: Some(features.resolve(p)),
                        });
                    }
                }
            }
        }
        grid
    }
}

/// The default 24-candidate grid for `p` features.
pub fn default_grid(p: usize) -> Vec<ForestParams> {
    GridSpec::default().expand(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub params: ForestParams,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub k: usize,
    pub seed: u64,
    pub candidates: Vec<CandidateResult>,
    pub chosen_index: usize,
}

/// Stratified fold assignment: class members are shuffled, then dealt
/// onto a fold cursor that rotates across classes, so every class lands
/// within one row of even across folds and `k == n` degenerates to
/// leave-one-out. Returns `k` sorted index lists.
pub(super) fn stratified_folds(
    labels: &[ModelKind],
    k: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut cursor = 0;
    for kind in ModelKind::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == kind).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[cursor].push(i);
            cursor = (cursor + 1) % k;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    folds
}

fn accuracy(model: &ForestModel, rows: &LabeledMatrix, indices: &[usize]) -> f64 {
    let correct = indices
        .iter()
        .filter(|&&i| predict_forest(model, rows.row(i)).expect("schema fixed") == rows.label(i))
        .count();
    correct as f64 / indices.len() as f64
}

/// Score every candidate by stratified k-fold CV on `train`, pick the
/// best (ties toward the earlier grid entry), and refit it on all of
/// `train`. Held-out test rows must never be passed in here.
pub fn grid_search_cv(
    train: &LabeledMatrix,
    grid: &[ForestParams],
    k: usize,
    seed: u64,
) -> Result<(GridSearchResult, ForestModel), SelectorError> {
    if grid.is_empty() {
        return Err(SelectorError::EmptyInput("empty hyperparameter grid".into()));
    }
    if k < 2 {
        return Err(SelectorError::EmptyInput(
            "cross-validation needs at least 2 folds".into(),
        ));
    }
    let n = train.n_rows();
    if n < k {
        return Err(SelectorError::TooFewRows {
            rows: n,
            needed: k,
            what: "k-fold cross-validation",
        });
    }

    let folds = stratified_folds(train.labels(), k, seed);
    debug_assert!(folds.iter().all(|f| !f.is_empty()));
    // Materialize each fold's training complement once, shared by all
    // candidates.
    let fold_trains: Vec<LabeledMatrix> = folds
        .iter()
        .map(|fold| {
            let keep: Vec<usize> = (0..n).filter(|i| fold.binary_search(i).is_err()).collect();
            train.subset(&keep)
        })
        .collect();

    let mut candidates = Vec::with_capacity(grid.len());
    let mut chosen_index = 0;
    for (c, params) in grid.iter().enumerate() {
        let mut fold_accuracies = Vec::with_capacity(k);
        for (fold, fold_train) in folds.iter().zip(&fold_trains) {
            let model = fit_forest(fold_train, params, seed)?;
            fold_accuracies.push(accuracy(&model, train, fold));
        }
        let mean_accuracy = fold_accuracies.iter().sum::<f64>() / k as f64;
        if mean_accuracy > candidates
            .get(chosen_index)
            .map_or(f64::NEG_INFINITY, |b: &CandidateResult| b.mean_accuracy)
        {
            chosen_index = c;
        }
        candidates.push(CandidateResult {
            params: *params,
            fold_accuracies,
            mean_accuracy,
        });
    }

    let final_model = fit_forest(train, &grid[chosen_index], seed)?;
    Ok((
        GridSearchResult {
            k,
            seed,
            candidates,
            chosen_index,
        },
        final_model,
    ))
}
