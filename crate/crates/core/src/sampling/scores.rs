use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{entropy, Matrix};

/// One unlabeled row with its selection score and both importance-weight cues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    /// Position in the unlabeled pool.
    pub index: usize,
    /// Selection priority under the strategy that produced it; higher is
    /// picked first.
    pub score: f64,
    /// `(1 - G_d) / G_d`.
    pub diversity_cue: f64,
    /// Prediction entropy `H(G_y)`.
    pub uncertainty_cue: f64,
}

/// `(1 - d) / d`, the density-ratio estimate from a discriminator output.
#[inline]
pub fn diversity_cue(domain_prob: f64) -> f64 {
    (1.0 - domain_prob) / domain_prob
}

/// Importance weight `s(x) = ((1 - G_d) / G_d) · H(G_y)` for every row.
pub fn importance_scores(domain_probs: &[f64], class_probs: &Matrix) -> Result<Vec<ScoredCandidate>> {
    if domain_probs.len() != class_probs.rows() {
        return Err(Error::dims("importance score inputs", class_probs.rows(), domain_probs.len()));
    }
    if let Some(&d) = domain_probs.iter().find(|&&d| !(d > 0.0 && d < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "domain probability {d} outside (0, 1)"
        )));
    }
    let entropies = entropy(class_probs)?;
    Ok(domain_probs
        .iter()
        .zip(entropies)
        .enumerate()
        .map(|(index, (&d, h))| {
            let w = diversity_cue(d);
            ScoredCandidate {
                index,
                score: w * h,
                diversity_cue: w,
                uncertainty_cue: h,
            }
        })
        .collect())
}

/// Best-versus-second-best margin per row; small means uncertain.
pub fn bvsb_scores(class_probs: &Matrix) -> Result<Vec<f64>> {
    if class_probs.cols() < 2 {
        return Err(Error::InvalidArgument(format!(
            "BvSB needs at least two classes, got {}",
            class_probs.cols()
        )));
    }
    Ok(class_probs
        .row_iter()
        .map(|row| {
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &p in row {
                if p > first {
                    second = first;
                    first = p;
                } else if p > second {
                    second = p;
                }
            }
            first - second
        })
        .collect())
}

/// Indices of the `b` largest scores; ties keep ascending index order.
pub fn top_b_descending(scores: &[f64], b: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    idx.truncate(b);
    idx
}

/// Indices of the `b` smallest scores; ties keep ascending index order.
pub fn top_b_ascending(scores: &[f64], b: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
    idx.truncate(b);
    idx
}
