//! Gradient-boosted regression trees used as the cost model.
//!
//! Squared-error boosting: the model starts at the mean target and each tree
//! fits the current residuals with exact greedy splits. Columns are sorted
//! once per fit and the sorted index lists are partitioned down the tree, so
//! no node re-sorts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::knobspace::{Configuration, DesignSpace, Knob, LayerWorkload};

/// Length of [`features`] output.
pub const NUM_FEATURES: usize = 20;

/// Encoded (workload, configuration) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Normalized knob indices, log2 knob values, then the workload descriptor.
pub fn features(space: &DesignSpace, workload: &LayerWorkload, cfg: &Configuration) -> FeatureVector {
    let mut v = Vec::with_capacity(NUM_FEATURES);
    v.extend(Knob::ALL.iter().map(|&k| space.normalized(cfg, k)));
    v.extend(Knob::ALL.iter().map(|&k| (space.value(cfg, k) as f64).log2()));
    v.extend(workload.descriptor());
    FeatureVector(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Minimum training-SSE improvement for a tree to be kept.
    pub tol: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 6, learning_rate: 0.3, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        /// Samples with `x[feature] <= threshold` go left.
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub root: TreeNode,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(left).max(go(right)),
            }
        }
        go(&self.root)
    }

    /// Index of the leaf `x` lands in, by pre-order position.
    pub fn leaf_id(&self, x: &[f64]) -> usize {
        fn count(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => 1 + count(left) + count(right),
            }
        }
        let mut node = &self.root;
        let mut id = 0;
        loop {
            match node {
                TreeNode::Leaf { .. } => return id,
                TreeNode::Split { feature, threshold, left, right } => {
                    if x[*feature] <= *threshold {
                        id += 1;
                        node = left;
                    } else {
                        id += 1 + count(left);
                        node = right;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub base_prediction: f64,
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_trees: usize,
    pub n_features: usize,
}

impl SurrogateModel {
    /// A model that predicts `value` everywhere.
    pub fn constant(value: f64, n_features: usize) -> Self {
        Self {
            base_prediction: value,
            trees: Vec::new(),
            learning_rate: 1.0,
            max_depth: 0,
            n_trees: 0,
            n_features,
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::ShapeMismatch { expected: self.n_features, actual: x.len() });
        }
        Ok(self.predict_unchecked(&x.0))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.base_prediction + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Debug dump; trees appear as nested objects.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Fits a boosted ensemble to `(features, target)` records.
pub fn fit(records: &[(FeatureVector, f64)], params: &BoostParams) -> Result<SurrogateModel> {
    let Some((first, _)) = records.first() else {
        return invalid("cannot fit a surrogate on zero records");
    };
    let dims = first.len();
    for (x, y) in records {
        if x.len() != dims {
            return Err(Error::ShapeMismatch { expected: dims, actual: x.len() });
        }
        if !y.is_finite() || x.0.iter().any(|v| !v.is_finite()) {
            return invalid("surrogate records must be finite");
        }
    }
    if !(params.learning_rate > 0.0) {
        return invalid("learning_rate must be positive");
    }

    let n = records.len();
    let columns: Vec<Vec<f64>> = (0..dims).map(|f| records.iter().map(|(x, _)| x.0[f]).collect()).collect();
    let targets: Vec<f64> = records.iter().map(|(_, y)| *y).collect();
    let sorted: Vec<Vec<u32>> = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let base = targets.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::new();
    let builder = TreeBuilder { columns: &columns, max_depth: params.max_depth };

    for _ in 0..params.n_trees {
        for i in 0..n {
            residual[i] = targets[i] - pred[i];
        }
        let sse_old: f64 = residual.iter().map(|r| r * r).sum();
        let mut fitted = vec![0.0; n];
        let tree = RegressionTree { root: builder.build(&residual, sorted.clone(), 0, &mut fitted) };
        let next: Vec<f64> = pred.iter().zip(&fitted).map(|(p, f)| p + params.learning_rate * f).collect();
        let sse_new: f64 = targets.iter().zip(&next).map(|(y, p)| (y - p) * (y - p)).sum();
        if sse_old - sse_new < params.tol {
            break;
        }
        pred = next;
        trees.push(tree);
    }

    Ok(SurrogateModel {
        base_prediction: base,
        trees,
        learning_rate: params.learning_rate,
        max_depth: params.max_depth,
        n_trees: params.n_trees,
        n_features: dims,
    })
}

/// Training-set sum of squared errors.
pub fn training_sse(model: &SurrogateModel, records: &[(FeatureVector, f64)]) -> f64 {
    records
        .iter()
        .map(|(x, y)| {
            let r = y - model.predict_unchecked(&x.0);
            r * r
        })
        .sum()
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    max_depth: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    /// `lists[f]` holds the node's samples sorted by feature `f`. Each
    /// sample's leaf value is written to `fitted`.
    fn build(&self, residual: &[f64], lists: Vec<Vec<u32>>, depth: usize, fitted: &mut [f64]) -> TreeNode {
        let samples = &lists[0];
        let count = samples.len();
        let sum: f64 = samples.iter().map(|&i| residual[i as usize]).sum();
        let mean = sum / count as f64;
        let leaf = |fitted: &mut [f64]| {
            for &i in samples {
                fitted[i as usize] = mean;
            }
            TreeNode::Leaf { value: mean }
        };
        if depth >= self.max_depth || count < 2 {
            return leaf(fitted);
        }

        let parent_score = sum * sum / count as f64;
        let mut best: Option<BestSplit> = None;
        for (feature, list) in lists.iter().enumerate() {
            let col = &self.columns[feature];
            let mut left_sum = 0.0;
            for k in 0..count - 1 {
                let i = list[k] as usize;
                left_sum += residual[i];
                let (here, next) = (col[i], col[list[k + 1] as usize]);
                if here == next {
                    continue;
                }
                let left_n = (k + 1) as f64;
                let right_n = (count - k - 1) as f64;
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / left_n + right_sum * right_sum / right_n - parent_score;
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    best = Some(BestSplit { feature, threshold: 0.5 * (here + next), gain });
                }
            }
        }

        let Some(split) = best else {
            return leaf(fitted);
        };
        let col = &self.columns[split.feature];
        let mut left_lists = Vec::with_capacity(lists.len());
        let mut right_lists = Vec::with_capacity(lists.len());
        for list in lists {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&i| col[i as usize] <= split.threshold);
            left_lists.push(l);
            right_lists.push(r);
        }
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(residual, left_lists, depth + 1, fitted)),
            right: Box::new(self.build(residual, right_lists, depth + 1, fitted)),
        }
    }
}
