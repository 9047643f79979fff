use std::io::Write;

use super::{NodeRef, RegressionTree, TreeError};
use crate::dataset::{confusion_matrix, mae, ConfusionMatrix, Dataset, DatasetError};

#[derive(Debug, Clone, PartialEq)]
pub struct LeafScore {
    pub leaf: usize,
    /// Test rows routed to this leaf.
    pub n: usize,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeReport {
    pub n: usize,
    pub mae: f64,
    pub per_leaf: Vec<LeafScore>,
    /// Per node, the share of rows reaching it (by routing) whose side
    /// agrees with the label threshold.
    pub node_accuracy: Vec<f64>,
    /// Rows are label-defined leaves, columns routed leaves.
    pub confusion: ConfusionMatrix,
    pub observed: Vec<f64>,
    pub predictions: Vec<f64>,
    /// Predicted minus observed.
    pub residuals: Vec<f64>,
    pub predicted_leaf: Vec<usize>,
    pub true_leaf: Vec<usize>,
}

pub fn evaluate<R: AsRef<[f64]>>(tree: &RegressionTree, x: &[R], y: &[f64]) -> Result<TreeReport, TreeError> {
    if x.len() != y.len() {
        return Err(DatasetError::LengthMismatch(x.len(), y.len()).into());
    }
    if x.is_empty() {
        return Err(DatasetError::Empty.into());
    }
    let predicted_leaf: Vec<usize> = x.iter().map(|r| tree.leaf_of(r.as_ref())).collect();
    let predictions: Vec<f64> = x
        .iter()
        .zip(&predicted_leaf)
        .map(|(r, &l)| tree.leaves[l].predict(r.as_ref()))
        .collect();
    let residuals: Vec<f64> = predictions.iter().zip(y).map(|(p, o)| p - o).collect();
    let true_leaf: Vec<usize> = y.iter().map(|&v| tree.true_leaf(v)).collect();

    let mut sums = vec![(0usize, 0.0f64); tree.leaves.len()];
    for (&l, r) in predicted_leaf.iter().zip(&residuals) {
        sums[l].0 += 1;
        sums[l].1 += r.abs();
    }
    let per_leaf = sums
        .iter()
        .enumerate()
        .map(|(leaf, &(n, s))| LeafScore {
            leaf,
            n,
            mae: if n == 0 { f64::NAN } else { s / n as f64 },
        })
        .collect();

    let mut hits = vec![(0usize, 0usize); tree.nodes.len()];
    for (r, &v) in x.iter().zip(y) {
        let mut at = tree.root;
        while let NodeRef::Node(n) = at {
            let node = &tree.nodes[n];
            let side = node.beta.eval(r.as_ref()) >= 0.0;
            hits[n].0 += 1;
            if side == (v >= node.threshold_c) {
                hits[n].1 += 1;
            }
            at = if side { node.child_pos } else { node.child_neg };
        }
    }
    let node_accuracy = hits
        .iter()
        .map(|&(n, ok)| if n == 0 { f64::NAN } else { ok as f64 / n as f64 })
        .collect();

    Ok(TreeReport {
        n: y.len(),
        mae: mae(&predictions, y)?,
        per_leaf,
        node_accuracy,
        confusion: confusion_matrix(&true_leaf, &predicted_leaf)?,
        observed: y.to_vec(),
        predictions,
        residuals,
        predicted_leaf,
        true_leaf,
    })
}

pub fn evaluate_dataset(tree: &RegressionTree, test: &Dataset) -> Result<TreeReport, TreeError> {
    evaluate(tree, &test.features(), &test.labels())
}

impl TreeReport {
    pub fn write_summary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "rows {}", self.n)?;
        writeln!(out, "mae_mw {:.6}", self.mae)?;
        for s in &self.per_leaf {
            writeln!(out, "leaf L{} rows {} mae_mw {:.6}", s.leaf, s.n, s.mae)?;
        }
        for (i, a) in self.node_accuracy.iter().enumerate() {
            writeln!(out, "node N{i} accuracy_pct {:.2}", 100.0 * a)?;
        }
        writeln!(out, "leaf_accuracy_pct {:.2}", self.confusion.accuracy())
    }

    /// One row per test sample: `observed,predicted,residual,true_leaf,predicted_leaf`.
    pub fn write_residuals_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "observed,predicted,residual,true_leaf,predicted_leaf")?;
        for i in 0..self.n {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.observed[i], self.predictions[i], self.residuals[i], self.true_leaf[i], self.predicted_leaf[i]
            )?;
        }
        Ok(())
    }
}
