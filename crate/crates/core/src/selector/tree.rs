//! A single Gini-impurity decision tree over feature rows.
//!
//! Trees are grown for use inside the random forest: every split
//! considers only a random subset of features, thresholds sit at
//! midpoints between distinct sorted values, and both children must
//! keep `min_samples_leaf` samples. Nodes live in an arena so the
//! fitted tree serializes as plain data.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::forecast::ModelKind;

use super::kind_index;

const N_CLASSES: usize = ModelKind::ALL.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: ModelKind,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTree {
    pub nodes: Vec<TreeNode>,
}

impl ClassTree {
    /// Walk the tree for one row; `value <= threshold` goes left.
    pub fn predict_row(&self, row: &[f64]) -> ModelKind {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { class } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

pub(super) struct TreeSettings {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: usize,
}

fn class_counts(labels: &[ModelKind], samples: &[usize]) -> [usize; N_CLASSES] {
    let mut counts = [0_usize; N_CLASSES];
    for &i in samples {
        counts[kind_index(labels[i])] += 1;
    }
    counts
}

/// Gini impurity 1 - sum(p_c^2) of a count vector.
fn gini(counts: &[usize; N_CLASSES], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut sum_sq = 0.0;
    for &c in counts {
        let p = c as f64 / total as f64;
        sum_sq += p * p;
    }
    1.0 - sum_sq
}

/// Majority class; count ties break toward the earlier [`ModelKind`].
fn majority(counts: &[usize; N_CLASSES]) -> ModelKind {
    let mut best = ModelKind::ALL[0];
    let mut best_count = counts[0];
    for kind in ModelKind::ALL {
        if counts[kind_index(kind)] > best_count {
            best = kind;
            best_count = counts[kind_index(kind)];
        }
    }
    best
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Scan one feature for the best Gini-gain threshold within a node.
fn scan_feature(
    rows: &dyn Fn(usize) -> f64,
    labels: &[ModelKind],
    samples: &[usize],
    parent_gini: f64,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let n = samples.len();
    // Sort by (value, row index) so equal values order deterministically.
    let mut order: Vec<usize> = samples.to_vec();
    order.sort_unstable_by(|&a, &b| rows(a).total_cmp(&rows(b)).then(a.cmp(&b)));

    let total = class_counts(labels, samples);
    let mut left = [0_usize; N_CLASSES];
    let mut best: Option<(f64, f64)> = None;
    for (k, &i) in order.iter().enumerate().take(n - 1) {
        left[kind_index(labels[i])] += 1;
        let n_left = k + 1;
        let n_right = n - n_left;
        let value = rows(i);
        let next = rows(order[k + 1]);
        if value == next {
            continue;
        }
        if n_left < min_leaf || n_right < min_leaf {
            continue;
        }
        let mut right = [0_usize; N_CLASSES];
        for c in 0..N_CLASSES {
            right[c] = total[c] - left[c];
        }
        let weighted = (n_left as f64 * gini(&left, n_left)
            + n_right as f64 * gini(&right, n_right))
            / n as f64;
        let gain = parent_gini - weighted;
        if gain <= 0.0 {
            continue;
        }
        let mut threshold = 0.5 * (value + next);
        // The midpoint can round up onto `next`; fall back so that
        // `value <= threshold` reproduces the scanned partition.
        if !(threshold < next) {
            threshold = value;
        }
        let improves = match best {
            None => true,
            Some((g, t)) => gain > g || (gain == g && threshold < t),
        };
        if improves {
            best = Some((gain, threshold));
        }
    }
    best
}

/// Grow a tree; returns the tree and raw (unnormalized) MDI importance
/// per feature: Gini decrease of each split weighted by node fraction.
pub(super) fn grow_class_tree<F>(
    row: F,
    n_features: usize,
    labels: &[ModelKind],
    samples: Vec<usize>,
    settings: &TreeSettings,
    rng: &mut impl Rng,
) -> (ClassTree, Vec<f64>)
where
    F: Fn(usize, usize) -> f64,
{
    assert!(!samples.is_empty(), "cannot grow a tree on zero samples");
    let n_total = samples.len();
    let mut nodes = Vec::new();
    let mut importances = vec![0.0; n_features];
    // Work stack of (samples, depth, slot); the slot is pre-reserved so
    // children can be appended in any order without dangling indices.
    nodes.push(TreeNode::Leaf {
        class: ModelKind::DailyNaive,
    });
    let mut stack = vec![(samples, 0_usize, 0_usize)];
    let mut feature_pool: Vec<usize> = (0..n_features).collect();

    while let Some((samples, depth, slot)) = stack.pop() {
        let counts = class_counts(labels, &samples);
        let node_gini = gini(&counts, samples.len());
        let depth_ok = settings.max_depth.map_or(true, |d| depth < d);
        let size_ok = samples.len() >= 2 * settings.min_samples_leaf && samples.len() >= 2;

        let mut split: Option<BestSplit> = None;
        if node_gini > 0.0 && depth_ok && size_ok {
            feature_pool.shuffle(rng);
            let subset = &feature_pool[..settings.features_per_split.min(n_features)];
            for &f in subset {
                if let Some((gain, threshold)) = scan_feature(
                    &|i| row(i, f),
                    labels,
                    &samples,
                    node_gini,
                    settings.min_samples_leaf,
                ) {
                    // Ties break toward the lower feature index, then the
                    // lower threshold, regardless of subset draw order.
                    let improves = match &split {
                        None => true,
                        Some(b) => {
                            gain > b.gain
                                || (gain == b.gain
                                    && (f < b.feature
                                        || (f == b.feature && threshold < b.threshold)))
                        }
                    };
                    if improves {
                        split = Some(BestSplit {
                            gain,
                            feature: f,
                            threshold,
                        });
                    }
                }
            }
        }

        match split {
            None => {
                nodes[slot] = TreeNode::Leaf {
                    class: majority(&counts),
                };
            }
            Some(best) => {
                importances[best.feature] +=
                    best.gain * samples.len() as f64 / n_total as f64;
                let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
                    .iter()
                    .copied()
                    .partition(|&i| row(i, best.feature) <= best.threshold);
                debug_assert!(!left_samples.is_empty() && !right_samples.is_empty());
                let left = nodes.len();
                nodes.push(TreeNode::Leaf {
                    class: ModelKind::DailyNaive,
                });
                let right = nodes.len();
                nodes.push(TreeNode::Leaf {
                    class: ModelKind::DailyNaive,
                });
                nodes[slot] = TreeNode::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left,
                    right,
                };
                stack.push((right_samples, depth + 1, right));
                stack.push((left_samples, depth + 1, left));
            }
        }
    }

    (ClassTree { nodes }, importances)
}
