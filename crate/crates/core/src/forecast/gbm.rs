//! Leaf-wise gradient-boosted regression trees.
//!
//! Boosting starts from the training mean and fits each tree to the
//! current residuals. Trees grow leaf-wise: the leaf with the largest
//! squared-error gain splits next, until `max_leaves` is reached or no
//! split has positive gain. With `learning_rate` in (0, 1] every round's
//! leaf outputs shrink the training squared loss, so the loss sequence is
//! non-increasing.

use super::{ForecastError, SupervisedSet};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbmParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    /// Reserved for stochastic variants (row/feature subsampling); the
    /// current fit is fully deterministic and never consumes it.
    pub seed: u64,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            learning_rate: 0.2,
            max_leaves: 15,
            min_samples_leaf: 20,
            seed: 0,
        }
    }
}

impl GbmParams {
    fn validate(&self) -> Result<(), ForecastError> {
        if !self.learning_rate.is_finite()
            || self.learning_rate <= 0.0
            || self.learning_rate > 1.0
        {
            return Err(ForecastError::InvalidConfig(
                "learning_rate must lie in (0, 1]".into(),
            ));
        }
        if self.max_leaves == 0 {
            return Err(ForecastError::InvalidConfig("max_leaves must be ≥ 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForecastError::InvalidConfig(
                "min_samples_leaf must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// Arena node: `value <= threshold` routes to `left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GbmNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// One regression tree as an index arena rooted at node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmTree {
    pub nodes: Vec<GbmNode>,
}

impl GbmTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                GbmNode::Leaf { value } => return *value,
                GbmNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, GbmNode::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub columns: Vec<String>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<GbmTree>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Scan every feature of one leaf for the best split. Candidates sit at
/// midpoints between consecutive distinct values; the scan keeps the first
/// candidate among equal gains, so ties resolve to the lowest feature
/// index and then the lowest threshold.
fn best_split(
    features: &[Vec<f64>],
    residuals: &[f64],
    sorted: &[Vec<u32>],
    total: f64,
    min_leaf: usize,
) -> Option<Candidate> {
    let n = sorted[0].len();
    if n < 2 * min_leaf {
        return None;
    }
    let parent_score = total * total / n as f64;
    let mut best: Option<Candidate> = None;
    for (f, column) in features.iter().enumerate() {
        let order = &sorted[f];
        let mut left_sum = 0.0;
        for pos in 0..n - 1 {
            left_sum += residuals[order[pos] as usize];
            let cur = column[order[pos] as usize];
            let next = column[order[pos + 1] as usize];
            if cur == next {
                continue;
            }
            let n_left = pos + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / n_left as f64
                + right_sum * right_sum / n_right as f64
                - parent_score;
            if gain <= 0.0 || best.is_some_and(|b| gain <= b.gain) {
                continue;
            }
            // The midpoint can round up onto `next`; fall back to `cur` so
            // `value <= threshold` reproduces exactly the scanned
            // partition.
            let mut threshold = 0.5 * (cur + next);
            if !(threshold < next) {
                threshold = cur;
            }
            best = Some(Candidate {
                gain,
                feature: f,
                threshold,
            });
        }
    }
    best
}

struct LeafBuild {
    node: usize,
    /// Per feature: this leaf's sample indices in feature-sorted order.
    sorted: Vec<Vec<u32>>,
    sum: f64,
    best: Option<Candidate>,
}

fn grow_tree(
    features: &[Vec<f64>],
    residuals: &[f64],
    root_sorted: &[Vec<u32>],
    params: &GbmParams,
) -> (GbmTree, Vec<f64>) {
    let n = residuals.len();
    let total: f64 = residuals.iter().sum();
    let mut nodes = vec![GbmNode::Leaf {
        value: total / n as f64,
    }];
    let mut leaves = vec![LeafBuild {
        node: 0,
        sorted: root_sorted.to_vec(),
        sum: total,
        best: best_split(
            features,
            residuals,
            root_sorted,
            total,
            params.min_samples_leaf,
        ),
    }];
    let mut go_left = vec![false; n];
    while leaves.len() < params.max_leaves {
        // The leaf with the largest gain splits next; equal gains resolve
        // to the leaf whose slot was created earlier.
        let Some(leaf_pos) = leaves
            .iter()
            .enumerate()
            .filter(|(_, leaf)| leaf.best.is_some())
            .max_by(|(i, a), (j, b)| {
                let (a, b) = (a.best.unwrap(), b.best.unwrap());
                a.gain.total_cmp(&b.gain).then(j.cmp(i))
            })
            .map(|(i, _)| i)
        else {
            break;
        };
        let cand = leaves[leaf_pos].best.expect("picked leaf has a candidate");
        let parent_sorted = std::mem::take(&mut leaves[leaf_pos].sorted);
        let parent_node = leaves[leaf_pos].node;
        let parent_sum = leaves[leaf_pos].sum;

        let mut left_sum = 0.0;
        let mut n_left = 0_usize;
        for &i in &parent_sorted[cand.feature] {
            let goes = features[cand.feature][i as usize] <= cand.threshold;
            go_left[i as usize] = goes;
            if goes {
                left_sum += residuals[i as usize];
                n_left += 1;
            }
        }
        let n_total = parent_sorted[cand.feature].len();
        debug_assert!(n_left >= params.min_samples_leaf);
        debug_assert!(n_total - n_left >= params.min_samples_leaf);

        let mut left_lists = Vec::with_capacity(parent_sorted.len());
        let mut right_lists = Vec::with_capacity(parent_sorted.len());
        for order in &parent_sorted {
            let mut left = Vec::with_capacity(n_left);
            let mut right = Vec::with_capacity(n_total - n_left);
            for &i in order {
                if go_left[i as usize] {
                    left.push(i);
                } else {
                    right.push(i);
                }
            }
            left_lists.push(left);
            right_lists.push(right);
        }

        let right_sum = parent_sum - left_sum;
        let left_node = nodes.len();
        let right_node = nodes.len() + 1;
        nodes.push(GbmNode::Leaf {
            value: left_sum / n_left as f64,
        });
        nodes.push(GbmNode::Leaf {
            value: right_sum / (n_total - n_left) as f64,
        });
        nodes[parent_node] = GbmNode::Split {
            feature: cand.feature,
            threshold: cand.threshold,
            left: left_node,
            right: right_node,
        };
        let left_best = best_split(
            features,
            residuals,
            &left_lists,
            left_sum,
            params.min_samples_leaf,
        );
        let right_best = best_split(
            features,
            residuals,
            &right_lists,
            right_sum,
            params.min_samples_leaf,
        );
        // The left child takes over the parent's slot; the right child
        // appends, preserving a stable creation order for tie-breaking.
        leaves[leaf_pos] = LeafBuild {
            node: left_node,
            sorted: left_lists,
            sum: left_sum,
            best: left_best,
        };
        leaves.push(LeafBuild {
            node: right_node,
            sorted: right_lists,
            sum: right_sum,
            best: right_best,
        });
    }

    let mut outputs = vec![0.0; n];
    for leaf in &leaves {
        let GbmNode::Leaf { value } = nodes[leaf.node] else {
            unreachable!("leaf builds always reference leaf nodes");
        };
        for &i in &leaf.sorted[0] {
            outputs[i as usize] = value;
        }
    }
    (GbmTree { nodes }, outputs)
}

pub fn fit_gbm(set: &SupervisedSet, params: &GbmParams) -> Result<GbmModel, ForecastError> {
    params.validate()?;
    let n = set.n_rows();
    if n == 0 {
        return Err(ForecastError::EmptySet);
    }
    let base_score = set.targets().iter().sum::<f64>() / n as f64;
    let mut residuals: Vec<f64> = set.targets().iter().map(|y| y - base_score).collect();

    // Feature-major copies and one global presort per feature; every
    // node's ordering is a stable partition of these lists.
    let p = set.n_cols();
    let mut features: Vec<Vec<f64>> = vec![Vec::with_capacity(n); p];
    for row in set.rows() {
        for (f, &v) in row.iter().enumerate() {
            features[f].push(v);
        }
    }
    let root_sorted: Vec<Vec<u32>> = features
        .iter()
        .map(|column| {
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_by(|&a, &b| column[a as usize].total_cmp(&column[b as usize]));
            order
        })
        .collect();

    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let (tree, outputs) = grow_tree(&features, &residuals, &root_sorted, params);
        for (r, out) in residuals.iter_mut().zip(&outputs) {
            *r -= params.learning_rate * out;
        }
        trees.push(tree);
    }
    Ok(GbmModel {
        columns: set.columns().to_vec(),
        base_score,
        learning_rate: params.learning_rate,
        trees,
    })
}

pub fn predict_gbm(model: &GbmModel, set: &SupervisedSet) -> Result<Vec<f64>, ForecastError> {
    if model.columns != set.columns() {
        return Err(ForecastError::SchemaMismatch(format!(
            "model was fitted on {} columns, rows provide {}",
            model.columns.len(),
            set.n_cols()
        )));
    }
    Ok(set
        .rows()
        .map(|row| {
            model.base_score
                + model.learning_rate
                    * model
                        .trees
                        .iter()
                        .map(|tree| tree.predict_row(row))
                        .sum::<f64>()
        })
        .collect())
}
