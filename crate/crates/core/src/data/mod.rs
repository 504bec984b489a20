//! Datasets: synthetic covariate-shift pairs, IDX ingestion, normalization
//! and splitting.

mod idx;
mod synth;

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub use idx::{
    load_idx, parse_idx_images, parse_idx_labels, read_idx_images, read_idx_labels,
    write_idx_images, write_idx_labels, IdxImages, IdxLabels, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use synth::{gen_shifted_pair, Generator, ShiftSpec};

/// Standard deviations below this are replaced by it.
pub const SD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub domain: Domain,
    pub provenance: String,
}

impl DomainDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        domain: Domain,
        provenance: String,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::dims("dataset labels", features.rows(), labels.len()));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                num_classes,
            });
        }
        if !features.all_finite() {
            return Err(Error::InvalidArgument("dataset features must be finite".into()));
        }
        Ok(DomainDataset {
            features,
            labels,
            num_classes,
            domain,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> DomainDataset {
        DomainDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            domain: self.domain,
            provenance: self.provenance.clone(),
        }
    }

    /// Seeded random subset of `n` rows (all rows if `n >= len`), kept in
    /// original order.
    pub fn subsample(&self, n: usize, seed: u64) -> DomainDataset {
        if n >= self.len() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n);
        idx.sort_unstable();
        let mut out = self.subset(&idx);
        out.provenance = format!("{}; subsampled to {n} rows (seed {seed})", self.provenance);
        out
    }

    /// Deterministic seeded split into `(pool, test)`, `pool_fraction` of the
    /// rows going to the pool.
    pub fn split(&self, pool_fraction: f64, seed: u64) -> Result<(DomainDataset, DomainDataset)> {
        if !(0.0..=1.0).contains(&pool_fraction) {
            return Err(Error::InvalidArgument(format!(
                "pool fraction {pool_fraction} outside [0, 1]"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = (self.len() as f64 * pool_fraction).round() as usize;
        let (pool, test) = idx.split_at(cut);
        Ok((self.subset(pool), self.subset(test)))
    }
}

/// Per-feature affine normalization fitted on a reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Column means and (population) standard deviations, floored at
    /// [`SD_FLOOR`].
    pub fn fit(reference: &Matrix) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::Empty("standardization reference"));
        }
        let n = reference.rows() as f64;
        let mean: Vec<f64> = reference.column_sums().into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; reference.cols()];
        for row in reference.row_iter() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let sd = var.into_iter().map(|v| (v / n).sqrt().max(SD_FLOOR)).collect();
        Ok(Standardizer { mean, sd })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::dims("standardizer width", self.mean.len(), x.cols()));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.sd) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn apply_dataset(&self, d: &DomainDataset) -> Result<DomainDataset> {
        Ok(DomainDataset {
            features: self.apply(&d.features)?,
            ..d.clone()
        })
    }
}

/// Fits on `reference` and applies the statistics to it and to `others`.
pub fn standardize(
    reference: &DomainDataset,
    others: &[&DomainDataset],
) -> Result<(DomainDataset, Vec<DomainDataset>, Standardizer)> {
    let stats = Standardizer::fit(&reference.features)?;
    let normalized = stats.apply_dataset(reference)?;
    let rest = others
        .iter()
        .map(|d| stats.apply_dataset(d))
        .collect::<Result<Vec<_>>>()?;
    Ok((normalized, rest, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dataset(rows: &[[f64; 3]]) -> DomainDataset {
        let labels = vec![0; rows.len()];
        DomainDataset::new(Matrix::from_rows(rows).unwrap(), labels, 2, Domain::Source, "t".into())
            .unwrap()
    }

    #[test]
    fn standardized_reference_has_zero_mean_unit_sd() {
        let d = dataset(&[[1.0, 5.0, 2.0], [3.0, 5.0, -1.0], [8.0, 5.0, 0.5], [0.0, 5.0, 4.0]]);
        let (n, _, stats) = standardize(&d, &[]).unwrap();
        let again = Standardizer::fit(&n.features).unwrap();
        for c in [0, 2] {
            assert_abs_diff_eq!(again.mean[c], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(again.sd[c], 1.0, epsilon = 1e-12);
        }
        // constant column maps to zeros under the floor rule
        assert!(n.features.row_iter().all(|r| r[1] == 0.0));
        assert_eq!(stats.sd[1], SD_FLOOR);
    }

    #[test]
    fn statistics_serialize_exactly() {
        let d = dataset(&[[0.1, 0.7, 1.0 / 3.0], [2.2, -0.4, 9.9], [1.7, 0.0, -3.1]]);
        let other = dataset(&[[0.5, 0.5, 0.5]]);
        let (_, rest, stats) = standardize(&d, &[&other]).unwrap();
        let text = serde_json::to_string(&stats).unwrap();
        let back: Standardizer = serde_json::from_str(&text).unwrap();
        assert_eq!(back, stats);
        assert_eq!(back.apply(&other.features).unwrap(), rest[0].features);
    }

    #[test]
    fn split_is_seeded_and_partitions() {
        let rows: Vec<[f64; 3]> = (0..30).map(|i| [i as f64, 0.0, 0.0]).collect();
        let d = dataset(&rows);
        let (p, t) = d.split(2.0 / 3.0, 7).unwrap();
        assert_eq!((p.len(), t.len()), (20, 10));
        let (p2, _) = d.split(2.0 / 3.0, 7).unwrap();
        assert_eq!(p.features, p2.features);
        let mut all: Vec<f64> = p.features.row_iter().chain(t.features.row_iter()).map(|r| r[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..30).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let err = DomainDataset::new(Matrix::zeros(2, 1), vec![0, 5], 3, Domain::Target, String::new());
        assert!(matches!(err, Err(Error::LabelOutOfRange { row: 1, .. })));
    }
}
