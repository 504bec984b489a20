//! Losses and probability utilities. Natural logarithms throughout.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Row sum tolerance for [`entropy`] inputs.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Row-wise log-softmax via log-sum-exp.
pub fn log_softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = log_softmax(logits).map(f64::exp);
    // renormalize so rows sum to one up to rounding of the final division
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Mean cross-entropy of `softmax(logits)` against `labels`, and its gradient
/// `(softmax - one_hot) / rows`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::dims("cross-entropy labels", logits.rows(), labels.len()));
    }
    if logits.rows() == 0 {
        return Err(Error::Empty("cross-entropy batch"));
    }
    let classes = logits.cols();
    for (row, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                num_classes: classes,
            });
        }
    }
    let n = logits.rows() as f64;
    let logp = log_softmax(logits);
    let mut loss = 0.0;
    let mut grad = logp.map(f64::exp);
    for (r, &label) in labels.iter().enumerate() {
        loss -= logp.get(r, label);
        let g = grad.row_mut(r);
        g[label] -= 1.0;
        g.iter_mut().for_each(|v| *v /= n);
    }
    Ok((loss / n, grad))
}

/// Mean negative log-likelihood of a logistic model, evaluated in the logit
/// domain. Label 1 means source. Returns the loss and `(σ(z) - y) / n`.
pub fn binary_logistic_loss(logits: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != labels.len() {
        return Err(Error::dims("logistic labels", logits.len(), labels.len()));
    }
    if logits.is_empty() {
        return Err(Error::Empty("logistic batch"));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            loss += softplus(z) - y * z;
            (sigmoid(z) - y) / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Per-row Shannon entropy of probability rows, with `0 · ln 0 = 0`.
pub fn entropy(probabilities: &Matrix) -> Result<Vec<f64>> {
    probabilities
        .row_iter()
        .enumerate()
        .map(|(row, p)| {
            if let Some(v) = p.iter().find(|v| **v < 0.0) {
                return Err(Error::NotADistribution {
                    row,
                    reason: format!("negative entry {v}"),
                });
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > DISTRIBUTION_TOLERANCE {
                return Err(Error::NotADistribution {
                    row,
                    reason: format!("sums to {s}"),
                });
            }
            Ok(-p
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| v * v.ln())
                .sum::<f64>())
        })
        .collect()
}

/// Mean prediction entropy of `softmax(logits)` and its gradient with respect
/// to the logits: `∂H/∂z_k = -p_k (ln p_k + H)`, divided by the row count.
pub fn entropy_from_logits(logits: &Matrix) -> (f64, Matrix) {
    let n = logits.rows().max(1) as f64;
    let logp = log_softmax(logits);
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for r in 0..logits.rows() {
        let lp = logp.row(r);
        let h: f64 = -lp.iter().map(|&l| l.exp() * l).sum::<f64>();
        total += h;
        for (g, &l) in grad.row_mut(r).iter_mut().zip(lp) {
            *g = -l.exp() * (l + h) / n;
        }
    }
    (total / n, grad)
}
