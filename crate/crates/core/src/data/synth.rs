use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Domain, DomainDataset};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    TwoMoons,
    GaussianMixture,
}

/// A synthetic source/target pair related by a rigid transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub generator: Generator,
    pub n_source: usize,
    pub n_target: usize,
    /// Counter-clockwise rotation of the target about the generator center.
    pub rotation_deg: f64,
    pub translation: [f64; 2],
    pub noise: f64,
    /// Class count for `gaussian_mixture`; two moons always has two.
    #[serde(default = "default_mixture_classes")]
    pub num_classes: usize,
    pub seed: u64,
}

fn default_mixture_classes() -> usize {
    3
}

impl Default for ShiftSpec {
    /// Two moons, 30° rotation, translation (0.5, 0), noise 0.15, 2000 + 2000.
    fn default() -> Self {
        ShiftSpec {
            generator: Generator::TwoMoons,
            n_source: 2000,
            n_target: 2000,
            rotation_deg: 30.0,
            translation: [0.5, 0.0],
            noise: 0.15,
            num_classes: default_mixture_classes(),
            seed: 0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(Error::config("dataset.noise", "must be > 0"));
        }
        if self.n_source == 0 {
            return Err(Error::config("dataset.n_source", "must be > 0"));
        }
        if self.n_target == 0 {
            return Err(Error::config("dataset.n_target", "must be > 0"));
        }
        if !self.rotation_deg.is_finite() || self.translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("dataset.rotation_deg", "shift parameters must be finite"));
        }
        if self.generator == Generator::GaussianMixture && self.num_classes < 2 {
            return Err(Error::config("dataset.num_classes", "need at least two classes"));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        match self.generator {
            Generator::TwoMoons => 2,
            Generator::GaussianMixture => self.num_classes,
        }
    }

    /// Point the rotation is taken about.
    pub fn center(&self) -> [f64; 2] {
        match self.generator {
            Generator::TwoMoons => [0.5, 0.25],
            Generator::GaussianMixture => [0.0, 0.0],
        }
    }

    /// Maps a source-space point into target space.
    pub fn transform(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let [cx, cy] = self.center();
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        [
            c * dx - s * dy + cx + self.translation[0],
            s * dx + c * dy + cy + self.translation[1],
        ]
    }

    pub fn inverse_transform(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let [cx, cy] = self.center();
        let (dx, dy) = (p[0] - cx - self.translation[0], p[1] - cy - self.translation[1]);
        [c * dx + s * dy + cx, -s * dx + c * dy + cy]
    }

    fn describe(&self, domain: Domain) -> String {
        format!(
            "synthetic {:?} {} n={} rotation={}deg translation=({}, {}) noise={} seed={}",
            self.generator,
            domain,
            match domain {
                Domain::Source => self.n_source,
                Domain::Target => self.n_target,
            },
            self.rotation_deg,
            self.translation[0],
            self.translation[1],
            self.noise,
            self.seed
        )
    }
}

/// Noise-free point of class `label` at parameter `u ∈ [0, 1)`.
fn canonical_point(spec: &ShiftSpec, label: usize, u: f64) -> [f64; 2] {
    match spec.generator {
        Generator::TwoMoons => {
            let t = PI * u;
            if label == 0 {
                [t.cos(), t.sin()]
            } else {
                [1.0 - t.cos(), 0.5 - t.sin()]
            }
        }
        Generator::GaussianMixture => {
            let angle = 2.0 * PI * label as f64 / spec.num_classes as f64;
            [2.0 * angle.cos(), 2.0 * angle.sin()]
        }
    }
}

fn sample(spec: &ShiftSpec, n: usize, stream: u64) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let noise = Normal::new(0.0, spec.noise).expect("validated noise");
    let classes = spec.num_classes();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % classes;
        let u: f64 = rng.random();
        let [x, y] = canonical_point(spec, label, u);
        points.push([x + noise.sample(&mut rng), y + noise.sample(&mut rng)]);
        labels.push(label);
    }
    (points, labels)
}

fn to_dataset(points: Vec<[f64; 2]>, labels: Vec<usize>, spec: &ShiftSpec, domain: Domain) -> Result<DomainDataset> {
    let data = points.into_iter().flatten().collect();
    DomainDataset::new(
        Matrix::from_vec(labels.len(), 2, data)?,
        labels,
        spec.num_classes(),
        domain,
        spec.describe(domain),
    )
}

/// Source and target datasets. The target is drawn from the same
/// class-conditional process and then moved by the rigid transform, so the
/// shift is purely in `p(x)`. Output depends only on `spec`.
pub fn gen_shifted_pair(spec: &ShiftSpec) -> Result<(DomainDataset, DomainDataset)> {
    spec.validate()?;
    let (src_pts, src_lab) = sample(spec, spec.n_source, 0);
    let (tgt_pts, tgt_lab) = sample(spec, spec.n_target, 1);
    let tgt_pts = tgt_pts.into_iter().map(|p| spec.transform(p)).collect();
    Ok((
        to_dataset(src_pts, src_lab, spec, Domain::Source)?,
        to_dataset(tgt_pts, tgt_lab, spec, Domain::Target)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_shift_is_indistinguishable() {
        let spec = ShiftSpec {
            rotation_deg: 0.0,
            translation: [0.0, 0.0],
            ..ShiftSpec::default()
        };
        let (s, t) = gen_shifted_pair(&spec).unwrap();
        for col in 0..2 {
            let mean = |d: &DomainDataset| {
                d.features.row_iter().map(|r| r[col]).sum::<f64>() / d.len() as f64
            };
            let var = {
                let m = mean(&s);
                s.features.row_iter().map(|r| (r[col] - m).powi(2)).sum::<f64>() / s.len() as f64
            };
            let diff = (mean(&s) - mean(&t)).abs();
            assert!(diff < 3.0 * var.sqrt() / (s.len() as f64).sqrt(), "col {col}: {diff}");
        }
    }

    #[test]
    fn half_turn_swaps_moon_positions() {
        let spec = ShiftSpec {
            rotation_deg: 180.0,
            translation: [0.0, 0.0],
            ..ShiftSpec::default()
        };
        for u in [0.0, 0.13, 0.5, 0.77, 0.999] {
            let upper = canonical_point(&spec, 0, u);
            let lower = canonical_point(&spec, 1, u);
            let moved = spec.transform(upper);
            assert_abs_diff_eq!(moved[0], lower[0], epsilon = 1e-12);
            assert_abs_diff_eq!(moved[1], lower[1], epsilon = 1e-12);
        }
        // labels are untouched by the transform
        let (s, t) = gen_shifted_pair(&spec).unwrap();
        assert_eq!(s.labels, t.labels);
        // class-0 target points now sit where class-1 source points are (below y = 0.25 on average)
        let mean_y = |d: &DomainDataset, c: usize| {
            let ys: Vec<f64> = d
                .features
                .row_iter()
                .zip(&d.labels)
                .filter(|(_, &l)| l == c)
                .map(|(r, _)| r[1])
                .collect();
            ys.iter().sum::<f64>() / ys.len() as f64
        };
        assert!(mean_y(&s, 0) > 0.25 && mean_y(&t, 0) < 0.25);
        assert!((mean_y(&t, 0) - mean_y(&s, 1)).abs() < 0.05);
    }

    #[test]
    fn generator_is_pure_function_of_spec() {
        let spec = ShiftSpec::default();
        let (a, b) = gen_shifted_pair(&spec).unwrap();
        let (c, d) = gen_shifted_pair(&spec).unwrap();
        assert_eq!(a.features, c.features);
        assert_eq!(b.features, d.features);
        let other = gen_shifted_pair(&ShiftSpec { seed: 1, ..spec }).unwrap().0;
        assert_ne!(a.features, other.features);
    }

    #[test]
    fn transform_round_trips() {
        let spec = ShiftSpec {
            rotation_deg: 47.0,
            translation: [0.3, -1.1],
            ..ShiftSpec::default()
        };
        let p = [0.7, -0.2];
        let q = spec.inverse_transform(spec.transform(p));
        assert_abs_diff_eq!(p[0], q[0], epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], q[1], epsilon = 1e-12);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ShiftSpec { noise: 0.0, ..ShiftSpec::default() }.validate().is_err());
        assert!(ShiftSpec { n_target: 0, ..ShiftSpec::default() }.validate().is_err());
        let gm = ShiftSpec {
            generator: Generator::GaussianMixture,
            num_classes: 1,
            ..ShiftSpec::default()
        };
        assert!(gm.validate().is_err());
    }

    #[test]
    fn gaussian_mixture_has_requested_classes() {
        let spec = ShiftSpec {
            generator: Generator::GaussianMixture,
            num_classes: 4,
            n_source: 100,
            n_target: 80,
            ..ShiftSpec::default()
        };
        let (s, t) = gen_shifted_pair(&spec).unwrap();
        assert_eq!(s.num_classes, 4);
        assert_eq!(t.len(), 80);
        assert!(s.labels.iter().all(|&l| l < 4));
    }
}
