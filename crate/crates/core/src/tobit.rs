//! Linear model censored at zero, fit by maximum likelihood.
//!
//! The latent value is `y* = α0 + α·x + ε`, `ε ~ N(0, σ²)`, and the observed
//! label is `y*` when positive and `0` otherwise. The likelihood is maximized
//! in Olsen's parameters `γ = α/σ`, `h = 1/σ`, where it is concave, by
//! Newton's method on standardized features. Prediction is the truncated
//! linear form `max(0, α0 + α·x)` with the boundary sent to zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dataset::{Dataset, DatasetError};
use crate::linear::{least_squares, AffineForm, Standardizer};

pub const MAX_ITERATIONS: usize = 200;
pub const GRADIENT_TOL: f64 = 1e-8;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, thiserror::Error)]
pub enum TobitError {
    #[error("every label is censored; the model is not identified")]
    AllCensored,
    #[error("training set is empty")]
    Empty,
    #[error("expected {expected} features per row, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TobitModel {
    pub alpha: AffineForm,
    pub sigma: f64,
    pub loglik: f64,
}

impl TobitModel {
    pub fn n_features(&self) -> usize {
        self.alpha.n_features()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        predict_tobit(self, x)
    }
}

pub fn predict_tobit(model: &TobitModel, x: &[f64]) -> f64 {
    let f = model.alpha.eval(x);
    if f > 0.0 {
        f
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TobitFit {
    pub model: TobitModel,
    /// Standard errors of `alpha` (raw features) and `sigma`.
    pub alpha_se: Vec<f64>,
    pub sigma_se: f64,
    pub initial_loglik: f64,
    pub n_censored: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// `ln Φ(a)`.
pub fn log_ndtr(a: f64) -> f64 {
    if a < -30.0 {
        let a2 = a * a;
        -0.5 * a2 - LN_SQRT_2PI - (-a).ln() + asymptotic_tail(a2).ln()
    } else if a > 5.0 {
        (-0.5 * erfc(a / std::f64::consts::SQRT_2)).ln_1p()
    } else {
        (0.5 * erfc(-a / std::f64::consts::SQRT_2)).ln()
    }
}

/// `φ(a) / Φ(a)`.
pub fn inverse_mills(a: f64) -> f64 {
    if a < -30.0 {
        -a / asymptotic_tail(a * a)
    } else {
        (-0.5 * a * a - LN_SQRT_2PI - log_ndtr(a)).exp()
    }
}

fn asymptotic_tail(a2: f64) -> f64 {
    let r = 1.0 / a2;
    1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)))
}

/// Log-likelihood in Olsen parameters with raw features; `gamma` is `α/σ`
/// and `h` is `1/σ`.
pub fn olsen_log_likelihood<R: AsRef<[f64]>>(x: &[R], y: &[f64], gamma: &AffineForm, h: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(r, &v)| {
            let eta = gamma.eval(r.as_ref());
            if v <= 0.0 {
                log_ndtr(-eta)
            } else {
                let e = h * v - eta;
                h.ln() - LN_SQRT_2PI - 0.5 * e * e
            }
        })
        .sum()
}

/// Gradient of [`olsen_log_likelihood`] as `[∂γ0, ∂γ…, ∂h]`.
pub fn olsen_gradient<R: AsRef<[f64]>>(x: &[R], y: &[f64], gamma: &AffineForm, h: f64) -> Vec<f64> {
    let p = gamma.coefficients.len();
    let mut g = vec![0.0; p + 1];
    for (r, &v) in x.iter().zip(y) {
        let r = r.as_ref();
        let eta = gamma.eval(r);
        let w = if v <= 0.0 {
            -inverse_mills(-eta)
        } else {
            let e = h * v - eta;
            g[p] += 1.0 / h - e * v;
            e
        };
        g[0] += w;
        for (gj, xj) in g[1..p].iter_mut().zip(r) {
            *gj += w * xj;
        }
    }
    g
}

struct Problem<'a> {
    design: &'a DMatrix<f64>,
    y: &'a [f64],
}

impl Problem<'_> {
    fn loglik(&self, theta: &DVector<f64>) -> f64 {
        let p = theta.len() - 1;
        let h = theta[p];
        if !(h > 0.0) {
            return f64::NEG_INFINITY;
        }
        let eta = self.design * theta.rows(0, p);
        eta.iter()
            .zip(self.y)
            .map(|(&e, &v)| {
                if v <= 0.0 {
                    log_ndtr(-e)
                } else {
                    let r = h * v - e;
                    h.ln() - LN_SQRT_2PI - 0.5 * r * r
                }
            })
            .sum()
    }

    fn gradient_hessian(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let p = theta.len() - 1;
        let h = theta[p];
        let eta = self.design * theta.rows(0, p);
        let mut g = DVector::zeros(p + 1);
        let mut hess = DMatrix::zeros(p + 1, p + 1);
        for (i, row) in self.design.row_iter().enumerate() {
            let v = self.y[i];
            let (w, c) = if v <= 0.0 {
                let a = -eta[i];
                let m = inverse_mills(a);
                (-m, -m * (a + m))
            } else {
                let e = h * v - eta[i];
                g[p] += 1.0 / h - e * v;
                hess[(p, p)] -= 1.0 / (h * h) + v * v;
                for j in 0..p {
                    hess[(j, p)] += row[j] * v;
                }
                (e, -1.0)
            };
            for j in 0..p {
                g[j] += w * row[j];
                for k in 0..=j {
                    hess[(j, k)] += c * row[j] * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                hess[(k, j)] = hess[(j, k)];
            }
            hess[(p, j)] = hess[(j, p)];
        }
        (g, hess)
    }
}

pub fn fit_tobit(train: &Dataset) -> Result<TobitFit, TobitError> {
    fit_tobit_from(&train.features(), &train.labels(), 4)
}

pub fn fit_tobit_from<R: AsRef<[f64]>>(x: &[R], y: &[f64], n_features: usize) -> Result<TobitFit, TobitError> {
    if x.len() != y.len() {
        return Err(DatasetError::LengthMismatch(x.len(), y.len()).into());
    }
    if x.is_empty() {
        return Err(TobitError::Empty);
    }
    if let Some(r) = x.iter().find(|r| r.as_ref().len() != n_features) {
        return Err(TobitError::FeatureCount {
            expected: n_features,
            got: r.as_ref().len(),
        });
    }
    let n_censored = y.iter().filter(|&&v| v <= 0.0).count();
    if n_censored == y.len() {
        return Err(TobitError::AllCensored);
    }

    let std = Standardizer::fit(x, n_features);
    let design = std.design(x, true);
    let p = n_features + 1;

    let (xu, yu): (Vec<&[f64]>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0)
        .map(|(r, &v)| (r.as_ref(), v))
        .unzip();
    let ols = least_squares(&xu, &yu, n_features);
    let sse: f64 = xu.iter().zip(&yu).map(|(r, v)| (ols.form.eval(r) - v).powi(2)).sum();
    let sigma0 = (sse / yu.len() as f64).sqrt();

    if n_censored == 0 {
        log::warn!("no censored labels; the censored model reduces to least squares");
        let sigma = sigma0.max(f64::MIN_POSITIVE);
        let loglik = -(yu.len() as f64) * (sigma.ln() + LN_SQRT_2PI + 0.5);
        let model = TobitModel {
            alpha: ols.form,
            sigma,
            loglik,
        };
        return Ok(TobitFit {
            alpha_se: vec![f64::NAN; p],
            sigma_se: f64::NAN,
            initial_loglik: loglik,
            model,
            n_censored,
            iterations: 0,
            converged: true,
        });
    }

    // Start from least squares on the uncensored rows, in standardized coordinates.
    let sigma0 = if sigma0 > 0.0 { sigma0 } else { yu.iter().copied().fold(0.0, f64::max).max(1.0) };
    let mut alpha_std = vec![ols.form.intercept(); p];
    for j in 0..n_features {
        alpha_std[j + 1] = if std.constant[j] { 0.0 } else { ols.form.weights()[j] * std.scale[j] };
        if !std.constant[j] {
            alpha_std[0] += ols.form.weights()[j] * std.mean[j];
        }
    }
    let mut theta = DVector::from_iterator(p + 1, alpha_std.iter().map(|a| a / sigma0).chain([1.0 / sigma0]));

    let problem = Problem { design: &design, y };
    let mut f = problem.loglik(&theta);
    let initial_loglik = f;
    let mut converged = false;
    let mut iterations = 0;
    let mut hess = DMatrix::zeros(p + 1, p + 1);
    for it in 0..MAX_ITERATIONS {
        let (g, hh) = problem.gradient_hessian(&theta);
        hess = hh;
        iterations = it;
        if g.amax() < GRADIENT_TOL {
            converged = true;
            break;
        }
        let neg = -&hess;
        let step = match neg.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone() / neg.diagonal().amax().max(1.0),
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &theta + &step * t;
            let fc = problem.loglik(&cand);
            if fc.is_finite() && fc >= f - 1e-12 * f.abs().max(1.0) {
                theta = cand;
                f = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            let (g, hh) = problem.gradient_hessian(&theta);
            hess = hh;
            converged = g.amax() < GRADIENT_TOL;
            break;
        }
        iterations = it + 1;
    }
    if !converged {
        log::warn!("censored fit stopped after {iterations} iterations without meeting the gradient tolerance");
    }

    let h = theta[p];
    let gamma = theta.rows(0, p);
    let alpha_std: Vec<f64> = gamma.iter().map(|g| g / h).collect();
    let alpha = std.destandardize(&alpha_std);

    // Delta method: θ → standardized α and σ, then the linear map to raw α.
    let cov = (-&hess).try_inverse().unwrap_or_else(|| DMatrix::from_element(p + 1, p + 1, f64::NAN));
    let mut jac = DMatrix::zeros(p + 1, p + 1);
    for j in 0..p {
        jac[(j, j)] = 1.0 / h;
        jac[(j, p)] = -gamma[j] / (h * h);
    }
    jac[(p, p)] = -1.0 / (h * h);
    let mut raw = DMatrix::zeros(p + 1, p + 1);
    raw[(0, 0)] = 1.0;
    raw[(p, p)] = 1.0;
    for j in 0..n_features {
        if std.constant[j] {
            continue;
        }
        raw[(j + 1, j + 1)] = 1.0 / std.scale[j];
        raw[(0, j + 1)] = -std.mean[j] / std.scale[j];
    }
    let map = raw * jac;
    let cov_raw = &map * cov * map.transpose();
    let se: Vec<f64> = (0..=p).map(|j| cov_raw[(j, j)].max(0.0).sqrt()).collect();

    Ok(TobitFit {
        model: TobitModel {
            alpha,
            sigma: 1.0 / h,
            loglik: f,
        },
        alpha_se: se[..p].to_vec(),
        sigma_se: se[p],
        initial_loglik,
        n_censored,
        iterations,
        converged,
    })
}
