//! Threshold grid search for a node: one logistic hyperplane per label
//! threshold `c`, scored by the absolute residuals of the two side fits.

use super::logistic::{fit_logistic, LogisticFit};
use super::{Leaf, TreeError, TreeParams};
use crate::linear::abs_residual_sum;
use crate::par;

#[derive(Debug, Clone)]
pub struct SplitCandidate {
    pub c: f64,
    pub fit: LogisticFit,
    /// Row indices with β-form ≥ 0.
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
    /// Every label below `c` is exactly zero, so the negative side is the
    /// zero class and becomes a zero leaf.
    pub zero_side: bool,
}

/// Grid thresholds `0, step, 2·step, …` up to the largest label. Thresholds
/// that reproduce an earlier class assignment are skipped, as are those that
/// leave one class empty.
pub fn threshold_grid(labels: &[f64], step: f64) -> Vec<f64> {
    let c_max = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(c_max >= 0.0) {
        return Vec::new();
    }
    let mut sorted = labels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k_max = (c_max / step + 1e-9).floor() as usize;
    let mut out = Vec::new();
    let mut last = usize::MAX;
    for k in 0..=k_max {
        let c = k as f64 * step;
        let below = sorted.partition_point(|&v| v < c);
        if below == 0 || below == n || below == last {
            continue;
        }
        last = below;
        out.push(c);
    }
    out
}

pub fn split_candidates<R: AsRef<[f64]> + Sync>(
    x: &[R],
    y: &[f64],
    rows: &[usize],
    n_features: usize,
    params: &TreeParams,
    workers: usize,
) -> Result<Vec<SplitCandidate>, TreeError> {
    let labels: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let grid = threshold_grid(&labels, params.c_step);
    let xs: Vec<&[f64]> = rows.iter().map(|&i| x[i].as_ref()).collect();

    let fitted = par::try_map(&grid, workers, |&c| {
        let z: Vec<bool> = labels.iter().map(|&v| v >= c).collect();
        let fit = fit_logistic(&xs, &z, n_features)?;
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (&row, xi) in rows.iter().zip(&xs) {
            if fit.beta.eval(xi) >= 0.0 {
                pos.push(row);
            } else {
                neg.push(row);
            }
        }
        let zero_side = labels.iter().filter(|&&v| v < c).all(|&v| v == 0.0);
        Ok::<_, TreeError>(SplitCandidate {
            c,
            fit,
            pos,
            neg,
            zero_side,
        })
    })?;
    let out: Vec<SplitCandidate> = fitted
        .into_iter()
        .filter(|s| s.pos.len() >= params.min_leaf_size && s.neg.len() >= params.min_leaf_size)
        .collect();
    if out.is_empty() {
        Err(TreeError::NoValidCandidate)
    } else {
        Ok(out)
    }
}

/// Sum of absolute residuals on one side: the least-squares leaf, or the
/// zero leaf when `zero` is set.
pub fn side_error<R: AsRef<[f64]>>(x: &[R], y: &[f64], rows: &[usize], n_features: usize, zero: bool) -> f64 {
    if zero {
        return rows.iter().map(|&i| y[i].abs()).sum();
    }
    let leaf = Leaf::fit(x, y, rows, n_features);
    let xs: Vec<&[f64]> = rows.iter().map(|&i| x[i].as_ref()).collect();
    let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    abs_residual_sum(&leaf.alpha, &xs, &ys)
}

pub fn split_objective<R: AsRef<[f64]>>(x: &[R], y: &[f64], cand: &SplitCandidate, n_features: usize) -> f64 {
    side_error(x, y, &cand.neg, n_features, cand.zero_side) + side_error(x, y, &cand.pos, n_features, false)
}

/// Index and objective of the best candidate; ties go to the smallest `c`.
pub fn select_split<R: AsRef<[f64]> + Sync>(
    x: &[R],
    y: &[f64],
    candidates: &[SplitCandidate],
    n_features: usize,
    workers: usize,
) -> Option<(usize, f64)> {
    let scores = par::map(candidates, workers, |c| split_objective(x, y, c, n_features));
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[a].c.total_cmp(&candidates[b].c));
    let mut best: Option<(usize, f64)> = None;
    for i in order {
        if best.is_none_or(|(_, s)| scores[i] < s) {
            best = Some((i, scores[i]));
        }
    }
    best
}
