//! Affine forms and the least-squares solver shared by the tree leaves and
//! the Tobit initializer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// `c[0] + Σ c[i]·x[i-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AffineForm {
    pub coefficients: Vec<f64>,
}

impl AffineForm {
    pub fn new(coefficients: Vec<f64>) -> Self {
        assert!(!coefficients.is_empty(), "an affine form needs an intercept");
        Self { coefficients }
    }

    pub fn zero(n_features: usize) -> Self {
        Self::new(vec![0.0; n_features + 1])
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn weights(&self) -> &[f64] {
        &self.coefficients[1..]
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_features());
        self.weights()
            .iter()
            .zip(x)
            .fold(self.intercept(), |acc, (w, v)| acc + w * v)
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|&c| c == 0.0)
    }

    /// Range of the form over the box `bounds` (interval arithmetic, exact
    /// for an affine function).
    pub fn interval(&self, bounds: &[(f64, f64)]) -> (f64, f64) {
        debug_assert_eq!(bounds.len(), self.n_features());
        let mut lo = self.intercept();
        let mut hi = self.intercept();
        for (&w, &(a, b)) in self.weights().iter().zip(bounds) {
            if w >= 0.0 {
                lo += w * a;
                hi += w * b;
            } else {
                lo += w * b;
                hi += w * a;
            }
        }
        (lo, hi)
    }

    /// (min, max) of the form over the given rows; `None` when empty.
    pub fn range_over<R: AsRef<[f64]>>(&self, rows: impl IntoIterator<Item = R>) -> Option<(f64, f64)> {
        rows.into_iter().fold(None, |acc, x| {
            let v = self.eval(x.as_ref());
            Some(match acc {
                None => (v, v),
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
            })
        })
    }
}

/// Column means and scales used to condition the normal systems. Columns
/// with zero spread keep a unit scale and are flagged constant.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit<R: AsRef<[f64]>>(x: &[R], n_features: usize) -> Self {
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; n_features];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; n_features];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut constant = vec![false; n_features];
        let scale = var
            .iter()
            .zip(&mut constant)
            .zip(&mean)
            .map(|((&v, c), m)| {
                let sd = (v / n).sqrt();
                if sd <= 1e-12 * m.abs().max(1.0) {
                    *c = true;
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self {
            mean,
            scale,
            constant,
        }
    }

    /// Design matrix `[1, (x − μ)/s]`; constant columns are zeroed.
    pub fn design<R: AsRef<[f64]>>(&self, x: &[R], with_intercept: bool) -> DMatrix<f64> {
        let p = self.mean.len();
        let off = usize::from(with_intercept);
        let mut m = DMatrix::zeros(x.len(), p + off);
        for (i, row) in x.iter().enumerate() {
            if with_intercept {
                m[(i, 0)] = 1.0;
            }
            for (j, v) in row.as_ref().iter().enumerate() {
                if !self.constant[j] {
                    m[(i, j + off)] = (v - self.mean[j]) / self.scale[j];
                }
            }
        }
        m
    }

    /// Maps standardized coefficients `[θ0, θ…]` back to raw features.
    pub fn destandardize(&self, theta: &[f64]) -> AffineForm {
        let mut coef = vec![0.0; theta.len()];
        let mut intercept = theta[0];
        for j in 0..self.mean.len() {
            if self.constant[j] {
                continue;
            }
            let w = theta[j + 1] / self.scale[j];
            coef[j + 1] = w;
            intercept -= w * self.mean[j];
        }
        coef[0] = intercept;
        AffineForm::new(coef)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub form: AffineForm,
    pub rank_deficient: bool,
}

/// Ordinary least squares via SVD of the centered, scaled design. Rank
/// deficiency falls back to the minimum-norm solution in the standardized
/// coordinates; constant columns always get a zero weight.
pub fn least_squares<R: AsRef<[f64]>>(x: &[R], y: &[f64], n_features: usize) -> LeastSquares {
    assert_eq!(x.len(), y.len());
    assert!(!y.is_empty(), "least squares needs at least one row");
    let std = Standardizer::fit(x, n_features);
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    let z = std.design(x, false);

    let mut theta = vec![0.0; n_features + 1];
    let mut rank_deficient = std.constant.iter().any(|&c| c);
    if n_features > 0 {
        let svd = z.svd(true, true);
        let s_max = svd.singular_values.max();
        let tol = s_max * 1e-10 * (y.len().max(n_features) as f64);
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        let active = std.constant.iter().filter(|&&c| !c).count();
        rank_deficient |= rank < active;
        let w = if s_max > 0.0 {
            svd.solve(&yc, tol).expect("u and v were computed")
        } else {
            DVector::zeros(n_features)
        };
        for j in 0..n_features {
            theta[j + 1] = w[j];
        }
    }
    theta[0] = y_mean;
    LeastSquares {
        form: std.destandardize(&theta),
        rank_deficient,
    }
}

/// Sum of absolute residuals of `form` over the rows.
pub fn abs_residual_sum<R: AsRef<[f64]>>(form: &AffineForm, x: &[R], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(row, v)| (form.eval(row.as_ref()) - v).abs())
        .sum()
}
