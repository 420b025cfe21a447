use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub l2_lambda: f64,
    pub class_weight: bool,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            l2_lambda: 1.0,
            class_weight: false,
            max_iter: 5000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn linear(theta: &[f64], row: &[f64]) -> f64 {
    let d = row.len();
    theta[..d].iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + theta[d]
}

/// Weighted NLL plus `(λ/2)‖w‖²`; `theta` is the weights followed by the bias.
pub fn objective(theta: &[f64], x: &[Vec<f64>], y: &[u8], sample_weight: &[f64], lambda: f64) -> f64 {
    let d = theta.len() - 1;
    let nll: f64 = x
        .iter()
        .zip(y)
        .zip(sample_weight)
        .map(|((row, &yi), &s)| {
            let z = linear(theta, row);
            s * (softplus(z) - f64::from(yi) * z)
        })
        .sum();
    nll + 0.5 * lambda * theta[..d].iter().map(|w| w * w).sum::<f64>()
}

pub fn gradient(theta: &[f64], x: &[Vec<f64>], y: &[u8], sample_weight: &[f64], lambda: f64) -> Vec<f64> {
    let d = theta.len() - 1;
    let mut g = vec![0.0; d + 1];
    for ((row, &yi), &s) in x.iter().zip(y).zip(sample_weight) {
        let r = s * (sigmoid(linear(theta, row)) - f64::from(yi));
        for (gj, xj) in g[..d].iter_mut().zip(row) {
            *gj += r * xj;
        }
        g[d] += r;
    }
    for (gj, w) in g[..d].iter_mut().zip(theta) {
        *gj += lambda * w;
    }
    g
}

/// Largest eigenvalue of `Xᵀ S X` by power iteration.
fn gram_top_eigenvalue(x: &[Vec<f64>], sample_weight: &[f64]) -> f64 {
    let d = x[0].len();
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut next = vec![0.0; d];
        for (row, &s) in x.iter().zip(sample_weight) {
            let dot = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            for (nj, xj) in next.iter_mut().zip(row) {
                *nj += s * dot * xj;
            }
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let done = (norm - lambda).abs() <= 1e-10 * norm;
        lambda = norm;
        v = next.into_iter().map(|a| a / norm).collect();
        if done {
            break;
        }
    }
    lambda
}

pub fn class_weights(y: &[u8]) -> [f64; 2] {
    let n = y.len() as f64;
    let n1 = y.iter().filter(|&&c| c == 1).count() as f64;
    let n0 = n - n1;
    [n / (2.0 * n0.max(1.0)), n / (2.0 * n1.max(1.0))]
}

impl LogisticRegression {
    /// Full-batch gradient descent with separate steps for weights and bias.
    ///
    /// For a PSD Hessian `[[A, c], [cᵀ, β]]`, `2·diag(A, β)` dominates it, so
    /// steps `1/L_w` and `1/L_b` built from doubled block bounds are safe while
    /// a huge λ no longer freezes the unregularized bias.
    pub fn fit(x: &[Vec<f64>], y: &[u8], params: &LogRegParams) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidArgument("logistic regression needs matching x and y".into()));
        }
        if y.iter().any(|&c| c > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        if !(params.l2_lambda >= 0.0) {
            return Err(Error::InvalidArgument("l2_lambda must be >= 0".into()));
        }
        let sample_weight: Vec<f64> = if params.class_weight {
            let cw = class_weights(y);
            y.iter().map(|&c| cw[c as usize]).collect()
        } else {
            vec![1.0; y.len()]
        };
        let d = x[0].len();
        // 10% head-room over the power-iteration estimate, which approaches from below
        let l_w = 2.0 * 0.25 * 1.1 * gram_top_eigenvalue(x, &sample_weight) + params.l2_lambda;
        let l_b = 2.0 * 0.25 * sample_weight.iter().sum::<f64>();
        let step_w = if l_w > 0.0 { 1.0 / l_w } else { 1.0 };
        let step_b = 1.0 / l_b;

        let mut theta = vec![0.0; d + 1];
        let mut iterations = 0;
        let mut converged = false;
        while iterations < params.max_iter {
            let g = gradient(&theta, x, y, &sample_weight, params.l2_lambda);
            if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < params.tol {
                converged = true;
                break;
            }
            for (t, gj) in theta[..d].iter_mut().zip(&g) {
                *t -= step_w * gj;
            }
            theta[d] -= step_b * g[d];
            iterations += 1;
        }
        if !converged {
            let g = gradient(&theta, x, y, &sample_weight, params.l2_lambda);
            converged = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < params.tol;
        }
        let bias = theta.pop().unwrap();
        Ok(LogisticRegression {
            weights: theta,
            bias,
            iterations,
            converged,
        })
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        let z: f64 = self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + self.bias;
        sigmoid(z)
    }
}

impl Classifier for LogisticRegression {
    fn score(&self, row: &[f64]) -> f64 {
        self.probability(row)
    }
}
