//! Bootstrap-aggregated classification forest with MDI importances.
//!
//! Every tree draws its own bootstrap sample (with replacement, same
//! size as the training set) and a fresh feature subset at each split.
//! Tree randomness is derived from `(seed, tree_index)` alone, so the
//! fitted forest is identical no matter how the trees are scheduled.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forecast::ModelKind;

use super::tree::{grow_class_tree, ClassTree, TreeSettings};
use super::{kind_index, LabeledMatrix, SelectorError};

/// Hyperparameters of one forest fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` means ceil(sqrt(p)).
    pub features_per_split: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
        }
    }
}

impl ForestParams {
    pub(super) fn resolve_features(&self, p: usize) -> usize {
        match self.features_per_split {
            Some(m) => m.clamp(1, p),
            None => (p as f64).sqrt().ceil() as usize,
        }
    }
}

/// A fitted forest, serializable as a versioned JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub seed: u64,
    pub params: ForestParams,
    /// Feature names, in row order.
    pub columns: Vec<String>,
    /// Distinct classes seen in training, in [`ModelKind`] order.
    pub classes: Vec<ModelKind>,
    /// Normalized mean-decrease-in-impurity per column; sums to one
    /// whenever any tree split (all zeros otherwise).
    pub importances: Vec<f64>,
    pub trees: Vec<ClassTree>,
}

pub const FOREST_MODEL_VERSION: u32 = 1;

fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut bytes = [0_u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&(tree_index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Fit a random forest on a labeled matrix.
pub fn fit_forest(
    train: &LabeledMatrix,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, SelectorError> {
    let n = train.n_rows();
    let p = train.matrix().n_cols();
    if n == 0 || p == 0 {
        return Err(SelectorError::EmptyInput(
            "forest training needs at least one row and one column".into(),
        ));
    }
    if params.n_trees == 0 || params.min_samples_leaf == 0 {
        return Err(SelectorError::EmptyInput(
            "n_trees and min_samples_leaf must be positive".into(),
        ));
    }
    let settings = TreeSettings {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        features_per_split: params.resolve_features(p),
    };
    let labels = train.labels();

    let fitted: Vec<(ClassTree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grow_class_tree(
                |i, f| train.row(i)[f],
                p,
                labels,
                bootstrap,
                &settings,
                &mut rng,
            )
        })
        .collect();

    let mut importances = vec![0.0; p];
    let mut trees = Vec::with_capacity(params.n_trees);
    for (tree, raw) in fitted {
        for (total, w) in importances.iter_mut().zip(&raw) {
            *total += w;
        }
        trees.push(tree);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        for w in &mut importances {
            *w /= total;
        }
    }

    let classes: Vec<ModelKind> = ModelKind::ALL
        .into_iter()
        .filter(|k| labels.contains(k))
        .collect();
    debug_assert!(!classes.is_empty());

    Ok(ForestModel {
        version: FOREST_MODEL_VERSION,
        seed,
        params: *params,
        columns: train.matrix().columns().to_vec(),
        classes,
        importances,
        trees,
    })
}

/// Majority vote over all trees; vote ties break toward the earlier
/// [`ModelKind`].
pub fn predict_forest(model: &ForestModel, row: &[f64]) -> Result<ModelKind, SelectorError> {
    if row.len() != model.columns.len() {
        return Err(SelectorError::SchemaMismatch(format!(
            "row has {} features, model expects {}",
            row.len(),
            model.columns.len()
        )));
    }
    let mut votes = [0_usize; 4];
    for tree in &model.trees {
        votes[kind_index(tree.predict_row(row))] += 1;
    }
    let mut best = ModelKind::ALL[0];
    for kind in ModelKind::ALL {
        if votes[kind_index(kind)] > votes[kind_index(best)] {
            best = kind;
        }
    }
    Ok(best)
}

/// Predicted label for every row of a matrix.
pub fn predict_rows(
    model: &ForestModel,
    matrix: &crate::features::FeatureMatrix,
) -> Result<Vec<ModelKind>, SelectorError> {
    (0..matrix.n_rows())
        .map(|i| predict_forest(model, matrix.row(i)))
        .collect()
}

/// The `k` heaviest features, descending by weight; weight ties break
/// by feature name. `k` clamps to the number of features.
pub fn top_k_importances(model: &ForestModel, k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = model
        .columns
        .iter()
        .cloned()
        .zip(model.importances.iter().copied())
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}
