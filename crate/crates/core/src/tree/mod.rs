//! Regression tree with logistic hyperplane splits and least-squares leaves.
//!
//! Each split node fits a logistic model to the indicator `y ≥ c` for a grid
//! of thresholds `c` and keeps the threshold whose two least-squares side
//! fits have the smallest total absolute residual. A point goes to the
//! positive child when `β0 + β·x ≥ 0`. When every label below `c` is exactly
//! zero, the negative side is a zero leaf that predicts `0.0` exactly.
//!
//! Nodes are stored in preorder and leaves in depth-first order with the
//! negative child visited first, so a zero leaf under the root is `L0`.

pub mod logistic;
mod report;
pub mod split;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetError};
use crate::linear::{abs_residual_sum, least_squares, AffineForm};

pub use logistic::{fit_logistic, LogisticFit};
pub use report::{evaluate, evaluate_dataset, LeafScore, TreeReport};
pub use split::{select_split, split_candidates, SplitCandidate};

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("both classes are required for a logistic split")]
    SingleClass,
    #[error("no threshold gives a split with two non-degenerate sides")]
    NoValidCandidate,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid tree parameters: {0}")]
    InvalidParams(String),
    #[error("expected {expected} features per row, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf_size: usize,
    /// Threshold grid step, MW.
    pub c_step: f64,
    /// Minimum drop in node MAE (MW) for a split to be kept.
    pub improvement_tol: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 2,
            min_leaf_size: 30,
            c_step: 0.1,
            improvement_tol: 1e-6,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.min_leaf_size == 0 {
            return Err(TreeError::InvalidParams("min_leaf_size must be at least 1".into()));
        }
        if !(self.c_step > 0.0 && self.c_step.is_finite()) {
            return Err(TreeError::InvalidParams(format!("c_step must be positive, got {}", self.c_step)));
        }
        if !(self.improvement_tol >= 0.0) {
            return Err(TreeError::InvalidParams("improvement_tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRef {
    Node(usize),
    Leaf(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitNode {
    pub beta: AffineForm,
    pub threshold_c: f64,
    pub child_neg: NodeRef,
    pub child_pos: NodeRef,
    pub m_lower: f64,
    pub m_upper: f64,
    pub n_train: usize,
    /// Share of training rows whose side agrees with `y ≥ c`.
    pub train_accuracy: f64,
    pub regularized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leaf {
    pub alpha: AffineForm,
    pub is_zero_leaf: bool,
    pub m_lower: f64,
    pub m_upper: f64,
    pub train_mae: f64,
    pub n_train: usize,
    pub rank_deficient: bool,
}

impl Leaf {
    pub fn zero(y: &[f64], rows: &[usize], n_features: usize) -> Self {
        let n = rows.len();
        let sae: f64 = rows.iter().map(|&i| y[i].abs()).sum();
        Self {
            alpha: AffineForm::zero(n_features),
            is_zero_leaf: true,
            m_lower: 0.0,
            m_upper: 0.0,
            train_mae: if n == 0 { 0.0 } else { sae / n as f64 },
            n_train: n,
            rank_deficient: false,
        }
    }

    /// Least-squares leaf over `rows`; all-zero labels give a zero leaf.
    pub fn fit<R: AsRef<[f64]>>(x: &[R], y: &[f64], rows: &[usize], n_features: usize) -> Self {
        assert!(!rows.is_empty(), "a leaf needs at least one row");
        if rows.iter().all(|&i| y[i] == 0.0) {
            return Self::zero(y, rows, n_features);
        }
        let xs: Vec<&[f64]> = rows.iter().map(|&i| x[i].as_ref()).collect();
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let ls = least_squares(&xs, &ys, n_features);
        let (m_lower, m_upper) = ls.form.range_over(&xs).expect("rows are non-empty");
        let train_mae = abs_residual_sum(&ls.form, &xs, &ys) / rows.len() as f64;
        Self {
            alpha: ls.form,
            is_zero_leaf: false,
            m_lower,
            m_upper,
            train_mae,
            n_train: rows.len(),
            rank_deficient: ls.rank_deficient,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.is_zero_leaf {
            0.0
        } else {
            self.alpha.eval(x)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionTree {
    pub n_features: usize,
    /// Per-feature (min, max) over the training rows.
    pub feature_bounds: Vec<(f64, f64)>,
    pub root: NodeRef,
    pub nodes: Vec<SplitNode>,
    pub leaves: Vec<Leaf>,
}

impl RegressionTree {
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut at = self.root;
        loop {
            match at {
                NodeRef::Leaf(l) => return l,
                NodeRef::Node(n) => {
                    let node = &self.nodes[n];
                    at = if node.beta.eval(x) >= 0.0 { node.child_pos } else { node.child_neg };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.leaves[self.leaf_of(x)].predict(x)
    }

    /// The leaf a sample belongs to by its label: positive child iff `y ≥ c`.
    pub fn true_leaf(&self, y: f64) -> usize {
        let mut at = self.root;
        loop {
            match at {
                NodeRef::Leaf(l) => return l,
                NodeRef::Node(n) => {
                    let node = &self.nodes[n];
                    at = if y >= node.threshold_c { node.child_pos } else { node.child_neg };
                }
            }
        }
    }

    /// Leaves under `r`, in leaf order.
    pub fn leaves_under(&self, r: NodeRef) -> Vec<usize> {
        match r {
            NodeRef::Leaf(l) => vec![l],
            NodeRef::Node(n) => {
                let mut v = self.leaves_under(self.nodes[n].child_neg);
                v.extend(self.leaves_under(self.nodes[n].child_pos));
                v
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, r: NodeRef) -> usize {
            match r {
                NodeRef::Leaf(_) => 0,
                NodeRef::Node(n) => 1 + go(t, t.nodes[n].child_neg).max(go(t, t.nodes[n].child_pos)),
            }
        }
        go(self, self.root)
    }
}

pub fn build_tree(train: &Dataset, params: &TreeParams, workers: usize) -> Result<RegressionTree, TreeError> {
    build_tree_from(&train.features(), &train.labels(), 4, params, workers)
}

pub fn build_tree_from<R: AsRef<[f64]> + Sync>(
    x: &[R],
    y: &[f64],
    n_features: usize,
    params: &TreeParams,
    workers: usize,
) -> Result<RegressionTree, TreeError> {
    params.validate()?;
    if x.is_empty() {
        return Err(TreeError::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(DatasetError::LengthMismatch(x.len(), y.len()).into());
    }
    if let Some(row) = x.iter().find(|r| r.as_ref().len() != n_features) {
        return Err(TreeError::FeatureCount {
            expected: n_features,
            got: row.as_ref().len(),
        });
    }
    let mut b = Builder {
        x,
        y,
        n_features,
        params,
        workers,
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    let rows: Vec<usize> = (0..x.len()).collect();
    let root = b.grow(rows, 0)?;
    let mut feature_bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); n_features];
    for r in x {
        for (b, &v) in feature_bounds.iter_mut().zip(r.as_ref()) {
            *b = (b.0.min(v), b.1.max(v));
        }
    }
    Ok(RegressionTree {
        n_features,
        feature_bounds,
        root,
        nodes: b.nodes.into_iter().map(|n| n.expect("every reserved node is filled")).collect(),
        leaves: b.leaves,
    })
}

struct Builder<'a, R> {
    x: &'a [R],
    y: &'a [f64],
    n_features: usize,
    params: &'a TreeParams,
    workers: usize,
    nodes: Vec<Option<SplitNode>>,
    leaves: Vec<Leaf>,
}

impl<R: AsRef<[f64]> + Sync> Builder<'_, R> {
    fn push_leaf(&mut self, leaf: Leaf) -> NodeRef {
        self.leaves.push(leaf);
        NodeRef::Leaf(self.leaves.len() - 1)
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> Result<NodeRef, TreeError> {
        let leaf = Leaf::fit(self.x, self.y, &rows, self.n_features);
        if leaf.is_zero_leaf || depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf_size {
            return Ok(self.push_leaf(leaf));
        }
        let candidates = match split_candidates(self.x, self.y, &rows, self.n_features, self.params, self.workers) {
            Ok(c) => c,
            Err(TreeError::NoValidCandidate) => return Ok(self.push_leaf(leaf)),
            Err(e) => return Err(e),
        };
        let (best, objective) =
            select_split(self.x, self.y, &candidates, self.n_features, self.workers).expect("candidates are non-empty");
        let n = rows.len() as f64;
        if leaf.train_mae - objective / n <= self.params.improvement_tol {
            return Ok(self.push_leaf(leaf));
        }
        let cand = candidates.into_iter().nth(best).expect("index from select_split");
        log::debug!(
            "depth {depth}: split {} rows at c = {:.1} ({} / {})",
            rows.len(),
            cand.c,
            cand.neg.len(),
            cand.pos.len()
        );

        let xs = rows.iter().map(|&i| self.x[i].as_ref());
        let (m_lower, m_upper) = cand.fit.beta.range_over(xs).expect("rows are non-empty");
        let agree = rows
            .iter()
            .filter(|&&i| (cand.fit.beta.eval(self.x[i].as_ref()) >= 0.0) == (self.y[i] >= cand.c))
            .count();
        let index = self.nodes.len();
        self.nodes.push(None);
        let child_neg = if cand.zero_side {
            let l = Leaf::zero(self.y, &cand.neg, self.n_features);
            self.push_leaf(l)
        } else {
            self.grow(cand.neg, depth + 1)?
        };
        let child_pos = self.grow(cand.pos, depth + 1)?;
        self.nodes[index] = Some(SplitNode {
            beta: cand.fit.beta,
            threshold_c: cand.c,
            child_neg,
            child_pos,
            m_lower,
            m_upper,
            n_train: rows.len(),
            train_accuracy: agree as f64 / n,
            regularized: cand.fit.regularized,
        });
        Ok(NodeRef::Node(index))
    }
}
