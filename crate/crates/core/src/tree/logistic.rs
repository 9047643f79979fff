//! Binary logistic regression by damped Newton on standardized features.

use nalgebra::{DMatrix, DVector};

use super::TreeError;
use crate::linear::{AffineForm, Standardizer};

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOL: f64 = 1e-8;
pub const FALLBACK_L2: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub beta: AffineForm,
    /// The unpenalized fit separated the classes (or failed to converge) and
    /// the L2 fallback was used.
    pub regularized: bool,
    pub converged: bool,
    pub iterations: usize,
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Log-likelihood of `beta` in raw feature coordinates.
pub fn log_likelihood<R: AsRef<[f64]>>(x: &[R], z: &[bool], beta: &AffineForm) -> f64 {
    x.iter()
        .zip(z)
        .map(|(row, &zi)| {
            let eta = beta.eval(row.as_ref());
            if zi {
                -softplus(-eta)
            } else {
                -softplus(eta)
            }
        })
        .sum()
}

/// Gradient of [`log_likelihood`] with respect to `[β0, β…]`.
pub fn gradient<R: AsRef<[f64]>>(x: &[R], z: &[bool], beta: &AffineForm) -> Vec<f64> {
    let mut g = vec![0.0; beta.coefficients.len()];
    for (row, &zi) in x.iter().zip(z) {
        let row = row.as_ref();
        let r = f64::from(u8::from(zi)) - sigmoid(beta.eval(row));
        g[0] += r;
        for (gj, v) in g[1..].iter_mut().zip(row) {
            *gj += r * v;
        }
    }
    g
}

struct Newton<'a> {
    design: &'a DMatrix<f64>,
    z: &'a DVector<f64>,
    lambda: f64,
}

impl Newton<'_> {
    fn objective(&self, theta: &DVector<f64>) -> f64 {
        let eta = self.design * theta;
        let ll: f64 = eta
            .iter()
            .zip(self.z.iter())
            .map(|(&e, &zi)| if zi > 0.5 { -softplus(-e) } else { -softplus(e) })
            .sum();
        ll - 0.5 * self.lambda * theta.rows(1, theta.len() - 1).norm_squared()
    }

    fn gradient_hessian(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let eta = self.design * theta;
        let p = eta.map(sigmoid);
        let mut g = self.design.tr_mul(&(self.z - &p));
        let w = p.map(|v| v * (1.0 - v));
        let mut weighted = self.design.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let mut h = self.design.tr_mul(&weighted);
        for j in 1..theta.len() {
            g[j] -= self.lambda * theta[j];
            h[(j, j)] += self.lambda;
        }
        (g, h)
    }

    /// Returns (theta, converged, iterations).
    fn run(&self, p: usize) -> (DVector<f64>, bool, usize) {
        let mut theta = DVector::zeros(p);
        let mut f = self.objective(&theta);
        for it in 0..MAX_ITERATIONS {
            let (g, h) = self.gradient_hessian(&theta);
            if g.amax() < GRADIENT_TOL {
                return (theta, true, it);
            }
            let step = solve_spd(h, &g);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &theta + &step * t;
                let fc = self.objective(&cand);
                if fc >= f - 1e-12 * f.abs().max(1.0) {
                    theta = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                let (g, _) = self.gradient_hessian(&theta);
                return (theta, g.amax() < GRADIENT_TOL, it + 1);
            }
        }
        let (g, _) = self.gradient_hessian(&theta);
        (theta, g.amax() < GRADIENT_TOL, MAX_ITERATIONS)
    }
}

fn solve_spd(mut h: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let mut jitter = 0.0;
    loop {
        if let Some(ch) = h.clone().cholesky() {
            return ch.solve(g);
        }
        let bump = if jitter == 0.0 { 1e-12 * h.diagonal().amax().max(1.0) } else { jitter * 10.0 };
        for j in 0..h.nrows() {
            h[(j, j)] += bump - jitter;
        }
        jitter = bump;
    }
}

fn separates(design: &DMatrix<f64>, z: &DVector<f64>, theta: &DVector<f64>) -> bool {
    let eta = design * theta;
    eta.iter()
        .zip(z.iter())
        .all(|(&e, &zi)| if zi > 0.5 { e > 0.0 } else { e < 0.0 })
}

pub fn fit_logistic<R: AsRef<[f64]>>(x: &[R], z: &[bool], n_features: usize) -> Result<LogisticFit, TreeError> {
    assert_eq!(x.len(), z.len());
    let n_pos = z.iter().filter(|&&v| v).count();
    if n_pos == 0 || n_pos == z.len() {
        return Err(TreeError::SingleClass);
    }
    let std = Standardizer::fit(x, n_features);
    let design = std.design(x, true);
    let zv = DVector::from_iterator(z.len(), z.iter().map(|&v| f64::from(u8::from(v))));

    let plain = Newton { design: &design, z: &zv, lambda: 0.0 };
    let (theta, converged, iterations) = plain.run(n_features + 1);
    if converged && !separates(&design, &zv, &theta) {
        return Ok(LogisticFit {
            beta: std.destandardize(theta.as_slice()),
            regularized: false,
            converged,
            iterations,
        });
    }
    log::debug!("logistic fit separated or stalled after {iterations} iterations; using L2 fallback");
    let ridge = Newton { design: &design, z: &zv, lambda: FALLBACK_L2 };
    let (theta, converged, iterations) = ridge.run(n_features + 1);
    Ok(LogisticFit {
        beta: std.destandardize(theta.as_slice()),
        regularized: true,
        converged,
        iterations,
    })
}
