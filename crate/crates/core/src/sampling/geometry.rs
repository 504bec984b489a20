//! Feature-space selection: greedy k-center, k-means, average distance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scores::top_b_descending;
use crate::error::{Error, Result};
use crate::nn::{squared_distance, Matrix};

pub const KMEANS_MAX_ITERATIONS: usize = 100;
pub const KMEANS_RELATIVE_TOLERANCE: f64 = 1e-6;

fn check_budget(n: usize, b: usize) -> Result<()> {
    if b > n {
        return Err(Error::BudgetExhausted {
            requested: b,
            available: n,
        });
    }
    Ok(())
}

/// Index of the largest value among allowed positions; ties go low.
fn argmax_allowed(values: &[f64], allowed: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if allowed[i] && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Distance from every unlabeled row to its nearest labeled row (infinite
/// when nothing is labeled).
pub fn nearest_labeled_distance(unlabeled: &Matrix, labeled: &Matrix) -> Vec<f64> {
    unlabeled
        .row_iter()
        .map(|u| {
            labeled
                .row_iter()
                .map(|l| squared_distance(u, l))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// Greedy farthest-first k-center selection.
///
/// Each pick is the unlabeled row farthest from the labeled rows plus the
/// picks so far. With no labeled rows the first pick is index 0. Returns
/// indices in pick order.
pub fn kcenter_select(unlabeled: &Matrix, labeled: &Matrix, b: usize) -> Result<Vec<usize>> {
    let n = unlabeled.rows();
    if n == 0 {
        return Err(Error::Empty("unlabeled pool"));
    }
    check_budget(n, b)?;
    if !labeled.is_empty() && labeled.cols() != unlabeled.cols() {
        return Err(Error::dims("k-center labeled features", unlabeled.cols(), labeled.cols()));
    }
    let mut min_dist: Vec<f64> = unlabeled
        .row_iter()
        .map(|u| {
            labeled
                .row_iter()
                .map(|l| squared_distance(u, l))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut available = vec![true; n];
    let mut picks = Vec::with_capacity(b);
    for _ in 0..b {
        let pick = if labeled.is_empty() && picks.is_empty() {
            0
        } else {
            argmax_allowed(&min_dist, &available).expect("b <= n leaves a candidate")
        };
        available[pick] = false;
        picks.push(pick);
        let center = unlabeled.row(pick);
        for (d, u) in min_dist.iter_mut().zip(unlabeled.row_iter()) {
            *d = d.min(squared_distance(u, center));
        }
    }
    Ok(picks)
}

/// Largest distance from any unlabeled row to its nearest center among the
/// labeled rows and the chosen unlabeled rows.
pub fn covering_radius(unlabeled: &Matrix, labeled: &Matrix, chosen: &[usize]) -> f64 {
    let centers = labeled.vstack(&unlabeled.select_rows(chosen)).expect("same width");
    nearest_labeled_distance(unlabeled, &centers)
        .into_iter()
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Matrix,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

fn nearest_center(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centroids.row_iter().enumerate() {
        let d = squared_distance(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeansFit> {
    let n = points.rows();
    if n == 0 {
        return Err(Error::Empty("k-means input"));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} with {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.row_iter().map(|p| squared_distance(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points.row_iter()) {
            *d = d.min(squared_distance(p, points.row(next)));
        }
    }
    let mut centroids = points.select_rows(&chosen);

    let mut assignment = vec![0; n];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITERATIONS {
        iterations += 1;
        let mut current = 0.0;
        for (i, p) in points.row_iter().enumerate() {
            let (c, d) = nearest_center(p, &centroids);
            assignment[i] = c;
            current += d;
        }
        let mut sums = Matrix::zeros(k, points.cols());
        let mut counts = vec![0usize; k];
        for (i, p) in points.row_iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, v) in sums.row_mut(assignment[i]).iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            // an empty cluster keeps its previous centroid
            if count > 0 {
                let cnt = count as f64;
                let row: Vec<f64> = sums.row(c).iter().map(|s| s / cnt).collect();
                centroids.row_mut(c).copy_from_slice(&row);
            }
        }
        let converged = current == 0.0
            || (inertia.is_finite() && (inertia - current).abs() <= KMEANS_RELATIVE_TOLERANCE * inertia);
        inertia = current;
        if converged {
            break;
        }
    }
    // final assignment against the final centroids
    inertia = 0.0;
    for (i, p) in points.row_iter().enumerate() {
        let (c, d) = nearest_center(p, &centroids);
        assignment[i] = c;
        inertia += d;
    }
    Ok(KMeansFit {
        centroids,
        assignment,
        inertia,
        iterations,
    })
}

/// Clusters the unlabeled rows into `b` groups and returns, per cluster, the
/// member nearest its centroid. A cluster whose members are all taken (or
/// that is empty) contributes the nearest remaining row instead, so the
/// result always holds `b` distinct indices.
pub fn kmeans_select(unlabeled: &Matrix, b: usize, seed: u64) -> Result<Vec<usize>> {
    let n = unlabeled.rows();
    if n == 0 {
        return Err(Error::Empty("unlabeled pool"));
    }
    check_budget(n, b)?;
    if b == 0 {
        return Ok(Vec::new());
    }
    let fit = kmeans(unlabeled, b, seed)?;
    let mut taken = vec![false; n];
    let mut picks = Vec::with_capacity(b);
    for (c, center) in fit.centroids.row_iter().enumerate() {
        let nearest = |members_only: bool| {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in unlabeled.row_iter().enumerate() {
                if taken[i] || (members_only && fit.assignment[i] != c) {
                    continue;
                }
                let d = squared_distance(p, center);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            best.map(|(i, _)| i)
        };
        let pick = nearest(true).or_else(|| nearest(false)).expect("b <= n");
        taken[pick] = true;
        picks.push(pick);
    }
    Ok(picks)
}

/// Mean Euclidean distance from each unlabeled row to all labeled target rows.
pub fn mean_distances(unlabeled: &Matrix, labeled_target: &Matrix) -> Result<Vec<f64>> {
    if labeled_target.is_empty() {
        return Err(Error::Empty("labeled target pool"));
    }
    if labeled_target.cols() != unlabeled.cols() {
        return Err(Error::dims("labeled target features", unlabeled.cols(), labeled_target.cols()));
    }
    let m = labeled_target.rows() as f64;
    Ok(unlabeled
        .row_iter()
        .map(|u| labeled_target.row_iter().map(|l| squared_distance(u, l).sqrt()).sum::<f64>() / m)
        .collect())
}

/// The `b` unlabeled rows with the largest mean distance to the labeled
/// target rows.
pub fn avg_distance_select(unlabeled: &Matrix, labeled_target: &Matrix, b: usize) -> Result<Vec<usize>> {
    check_budget(unlabeled.rows(), b)?;
    Ok(top_b_descending(&mean_distances(unlabeled, labeled_target)?, b))
}
