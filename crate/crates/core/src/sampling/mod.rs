//! Sample-selection strategies over the unlabeled target pool.

mod geometry;
mod scores;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dann::DannModel;
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub use geometry::{
    avg_distance_select, covering_radius, kcenter_select, kmeans, kmeans_select, mean_distances,
    nearest_labeled_distance, KMeansFit, KMEANS_MAX_ITERATIONS, KMEANS_RELATIVE_TOLERANCE,
};
pub use scores::{
    bvsb_scores, diversity_cue, importance_scores, top_b_ascending, top_b_descending,
    ScoredCandidate,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ImportanceWeight,
    DiversityCueOnly,
    UncertaintyCueOnly,
    KMeans,
    KCenter,
    AvgDistanceDiversity,
    #[serde(rename = "bvsb")]
    BvSB,
    EntropyOnly,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::ImportanceWeight,
        Strategy::DiversityCueOnly,
        Strategy::UncertaintyCueOnly,
        Strategy::KMeans,
        Strategy::KCenter,
        Strategy::AvgDistanceDiversity,
        Strategy::BvSB,
        Strategy::EntropyOnly,
        Strategy::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::ImportanceWeight => "importance_weight",
            Strategy::DiversityCueOnly => "diversity_cue_only",
            Strategy::UncertaintyCueOnly => "uncertainty_cue_only",
            Strategy::KMeans => "k_means",
            Strategy::KCenter => "k_center",
            Strategy::AvgDistanceDiversity => "avg_distance_diversity",
            Strategy::BvSB => "bvsb",
            Strategy::EntropyOnly => "entropy_only",
            Strategy::Random => "random",
        }
    }

    /// Whether the strategy is undefined while no target label exists.
    pub fn needs_labeled_target(self) -> bool {
        matches!(self, Strategy::AvgDistanceDiversity)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy `{s}`")))
    }
}

/// Outcome of one selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Strategy actually applied (differs from the request on fallback).
    pub strategy: Strategy,
    /// Chosen positions in the unlabeled pool, in pick order.
    pub indices: Vec<usize>,
    /// Every unlabeled row with its score and cues.
    pub candidates: Vec<ScoredCandidate>,
}

pub fn random_select(n: usize, b: usize, seed: u64) -> Result<Vec<usize>> {
    if b > n {
        return Err(Error::BudgetExhausted {
            requested: b,
            available: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n, b).into_vec())
}

/// Picks `b` rows of `unlabeled` under `strategy`, using `model` for
/// features and predictions. Distances are Euclidean on raw feature-extractor
/// outputs. Strategies that need labeled target rows fall back to random
/// selection while there are none.
pub fn select(
    strategy: Strategy,
    model: &DannModel,
    unlabeled: &Matrix,
    labeled_target: &Matrix,
    b: usize,
    seed: u64,
) -> Result<Selection> {
    let n = unlabeled.rows();
    if b > n {
        return Err(Error::BudgetExhausted {
            requested: b,
            available: n,
        });
    }
    if n == 0 {
        return Ok(Selection {
            strategy,
            indices: Vec::new(),
            candidates: Vec::new(),
        });
    }
    let pred = model.predict(unlabeled)?;
    let mut candidates = importance_scores(&pred.domain_probs, &pred.class_probs)?;
    let effective = if strategy.needs_labeled_target() && labeled_target.is_empty() {
        Strategy::Random
    } else {
        strategy
    };

    let set_scores = |candidates: &mut Vec<ScoredCandidate>, scores: &[f64]| {
        for (c, &s) in candidates.iter_mut().zip(scores) {
            c.score = s;
        }
    };
    let column = |f: fn(&ScoredCandidate) -> f64, c: &[ScoredCandidate]| -> Vec<f64> { c.iter().map(f).collect() };

    let indices = match effective {
        Strategy::ImportanceWeight => top_b_descending(&column(|c| c.score, &candidates), b),
        Strategy::DiversityCueOnly => {
            let s = column(|c| c.diversity_cue, &candidates);
            set_scores(&mut candidates, &s);
            top_b_descending(&s, b)
        }
        Strategy::UncertaintyCueOnly | Strategy::EntropyOnly => {
            let s = column(|c| c.uncertainty_cue, &candidates);
            set_scores(&mut candidates, &s);
            top_b_descending(&s, b)
        }
        Strategy::BvSB => {
            let margins = bvsb_scores(&pred.class_probs)?;
            let priority: Vec<f64> = margins.iter().map(|m| 1.0 - m).collect();
            set_scores(&mut candidates, &priority);
            top_b_ascending(&margins, b)
        }
        Strategy::KCenter => {
            let labeled_features = if labeled_target.is_empty() {
                Matrix::zeros(0, pred.features.cols())
            } else {
                model.features(labeled_target)?
            };
            let d = nearest_labeled_distance(&pred.features, &labeled_features);
            let d: Vec<f64> = d.into_iter().map(|v| if v.is_finite() { v } else { 0.0 }).collect();
            set_scores(&mut candidates, &d);
            kcenter_select(&pred.features, &labeled_features, b)?
        }
        Strategy::KMeans => {
            let picks = kmeans_select(&pred.features, b, seed)?;
            set_scores(&mut candidates, &vec![0.0; n]);
            picks
        }
        Strategy::AvgDistanceDiversity => {
            let labeled_features = model.features(labeled_target)?;
            let d = mean_distances(&pred.features, &labeled_features)?;
            set_scores(&mut candidates, &d);
            top_b_descending(&d, b)
        }
        Strategy::Random => {
            set_scores(&mut candidates, &vec![0.0; n]);
            random_select(n, b, seed)?
        }
    };
    Ok(Selection {
        strategy: effective,
        indices,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dann::{DannConfig, ModelDims};

    fn model() -> DannModel {
        let cfg = DannConfig {
            input_dim: 2,
            num_classes: 3,
            dims: ModelDims {
                feature_hidden: vec![8],
                feature_dim: 6,
                class_hidden: vec![],
                discriminator_hidden: vec![4],
            },
            lambda_adv: 0.1,
            lambda_ent: 0.1,
        };
        DannModel::new(&cfg, 42).unwrap()
    }

    fn pool(n: usize) -> Matrix {
        Matrix::from_vec(n, 2, (0..2 * n).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect()).unwrap()
    }

    #[test]
    fn every_strategy_returns_distinct_indices_in_range() {
        let m = model();
        let u = pool(25);
        let lt = pool(3);
        for strategy in Strategy::ALL {
            for labeled in [&lt, &Matrix::zeros(0, 2)] {
                let sel = select(strategy, &m, &u, labeled, 7, 5).unwrap();
                let mut idx = sel.indices.clone();
                idx.sort_unstable();
                idx.dedup();
                assert_eq!(idx.len(), 7, "{strategy}");
                assert!(idx.iter().all(|&i| i < 25));
                assert_eq!(sel.candidates.len(), 25);
            }
        }
    }

    #[test]
    fn random_is_reproducible() {
        let m = model();
        let u = pool(30);
        let a = select(Strategy::Random, &m, &u, &Matrix::zeros(0, 2), 5, 9).unwrap();
        let b = select(Strategy::Random, &m, &u, &Matrix::zeros(0, 2), 5, 9).unwrap();
        assert_eq!(a.indices, b.indices);
        let c = select(Strategy::Random, &m, &u, &Matrix::zeros(0, 2), 5, 10).unwrap();
        assert_ne!(a.indices, c.indices);
    }

    #[test]
    fn uncertainty_cue_equals_entropy_only() {
        let m = model();
        let u = pool(20);
        let a = select(Strategy::UncertaintyCueOnly, &m, &u, &Matrix::zeros(0, 2), 6, 1).unwrap();
        let b = select(Strategy::EntropyOnly, &m, &u, &Matrix::zeros(0, 2), 6, 1).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn cue_product_is_exact() {
        let m = model();
        let u = pool(20);
        let none = Matrix::zeros(0, 2);
        let iw = select(Strategy::ImportanceWeight, &m, &u, &none, 1, 0).unwrap();
        let div = select(Strategy::DiversityCueOnly, &m, &u, &none, 1, 0).unwrap();
        let unc = select(Strategy::UncertaintyCueOnly, &m, &u, &none, 1, 0).unwrap();
        for ((a, d), h) in iw.candidates.iter().zip(&div.candidates).zip(&unc.candidates) {
            assert_eq!(a.score, d.score * h.score);
            assert!(a.diversity_cue >= 0.0);
            assert!((0.0..=3f64.ln() + 1e-12).contains(&a.uncertainty_cue));
        }
    }

    #[test]
    fn avg_distance_falls_back_to_random_without_labels() {
        let m = model();
        let u = pool(15);
        let sel = select(Strategy::AvgDistanceDiversity, &m, &u, &Matrix::zeros(0, 2), 4, 3).unwrap();
        assert_eq!(sel.strategy, Strategy::Random);
        assert_eq!(sel.indices, random_select(15, 4, 3).unwrap());
    }

    #[test]
    fn oversized_budget_rejected() {
        let m = model();
        assert!(matches!(
            select(Strategy::Random, &m, &pool(3), &Matrix::zeros(0, 2), 4, 0),
            Err(Error::BudgetExhausted { requested: 4, available: 3 })
        ));
    }

    #[test]
    fn names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
    }
}
