use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{
    DannConfig, DannModel, LabeledBatch, LossReport, StepOptions, UnlabeledBatch, SOURCE_DOMAIN,
    TARGET_DOMAIN,
};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainScheme {
    Adversarial,
    Joint,
    FineTune,
    TargetOnly,
}

impl TrainScheme {
    pub const ALL: [TrainScheme; 4] = [
        TrainScheme::Adversarial,
        TrainScheme::Joint,
        TrainScheme::FineTune,
        TrainScheme::TargetOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainScheme::Adversarial => "adversarial",
            TrainScheme::Joint => "joint",
            TrainScheme::FineTune => "fine_tune",
            TrainScheme::TargetOnly => "target_only",
        }
    }

    /// Whether the scheme can train before any target label exists.
    pub fn trains_without_target_labels(self) -> bool {
        !matches!(self, TrainScheme::TargetOnly)
    }
}

impl std::fmt::Display for TrainScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TrainScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainScheme::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheme `{s}`")))
    }
}

/// Which side of the discriminator labeled target rows sit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabeledTargetSide {
    /// Labeled pool (source and target) versus unlabeled target.
    #[default]
    Labeled,
    /// Source versus all target rows, labeled or not.
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub phases: Vec<Phase>,
    pub batch_size: usize,
    /// Learning-rate multiplier for the fine-tuning phase.
    #[serde(default = "default_finetune_factor")]
    pub finetune_lr_factor: f64,
}

fn default_finetune_factor() -> f64 {
    0.5
}

impl Schedule {
    /// 3 × 30 epochs at {1e-3, 5e-4, 2.5e-4}, batch 64.
    pub fn toy() -> Self {
        Schedule {
            phases: [1e-3, 5e-4, 2.5e-4]
                .into_iter()
                .map(|learning_rate| Phase {
                    epochs: 30,
                    learning_rate,
                })
                .collect(),
            batch_size: 64,
            finetune_lr_factor: 0.5,
        }
    }

    /// 3 × 20 epochs at {2e-4, 1e-4, 5e-5}, batch 128.
    pub fn paper_digits() -> Self {
        Schedule {
            phases: [2e-4, 1e-4, 5e-5]
                .into_iter()
                .map(|learning_rate| Phase {
                    epochs: 20,
                    learning_rate,
                })
                .collect(),
            batch_size: 128,
            finetune_lr_factor: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("training.batch_size", "must be positive"));
        }
        if self.phases.is_empty() {
            return Err(Error::config("training.phases", "at least one phase is required"));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                return Err(Error::config(
                    format!("training.phases[{i}].learning_rate"),
                    "must be a positive finite number",
                ));
            }
        }
        if !(self.finetune_lr_factor > 0.0 && self.finetune_lr_factor.is_finite()) {
            return Err(Error::config("training.finetune_lr_factor", "must be positive"));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.phases.iter().map(|p| p.epochs).sum()
    }
}

/// Features and labels of the three pools one round trains on.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub source: &'a Matrix,
    pub source_labels: &'a [usize],
    pub labeled_target: &'a Matrix,
    pub labeled_target_labels: &'a [usize],
    pub unlabeled_target: &'a Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub stage: String,
    pub epoch: usize,
    pub class_loss: Option<f64>,
    pub domain_loss: Option<f64>,
    pub entropy_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub labeled_target_side: LabeledTargetSide,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            labeled_target_side: LabeledTargetSide::Labeled,
        }
    }
}

/// A pooled labeled set drawn from uniformly, row by row.
struct LabeledPool {
    features: Matrix,
    labels: Vec<usize>,
    domains: Vec<u8>,
}

impl LabeledPool {
    fn build(parts: &[(&Matrix, &[usize], u8)]) -> Result<Self> {
        let mut features = Matrix::zeros(0, 0);
        let mut labels = Vec::new();
        let mut domains = Vec::new();
        for &(x, y, d) in parts {
            if x.rows() != y.len() {
                return Err(Error::dims("pool labels", x.rows(), y.len()));
            }
            features = features.vstack(x)?;
            labels.extend_from_slice(y);
            domains.extend(std::iter::repeat_n(d, y.len()));
        }
        Ok(LabeledPool {
            features,
            labels,
            domains,
        })
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn batch<R: Rng>(&self, size: usize, rng: &mut R) -> Result<LabeledBatch> {
        let idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..self.len())).collect();
        LabeledBatch::new(
            self.features.select_rows(&idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
            idx.iter().map(|&i| self.domains[i]).collect(),
        )
    }
}

fn unlabeled_batch<R: Rng>(pool: &Matrix, size: usize, rng: &mut R) -> Option<UnlabeledBatch> {
    if pool.is_empty() {
        return None;
    }
    let idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..pool.rows())).collect();
    Some(UnlabeledBatch::target(pool.select_rows(&idx)))
}

#[derive(Default)]
struct EpochAccumulator {
    steps: usize,
    class: f64,
    domain: Option<f64>,
    entropy: Option<f64>,
}

impl EpochAccumulator {
    fn add(&mut self, r: &LossReport) {
        self.steps += 1;
        self.class += r.class_loss;
        if let Some(d) = r.domain_loss {
            *self.domain.get_or_insert(0.0) += d;
        }
        if let Some(e) = r.entropy_loss {
            *self.entropy.get_or_insert(0.0) += e;
        }
    }

    fn finish(self, stage: &str, epoch: usize, has_class: bool) -> EpochLoss {
        let n = self.steps.max(1) as f64;
        EpochLoss {
            stage: stage.to_string(),
            epoch,
            class_loss: has_class.then_some(self.class / n),
            domain_loss: self.domain.map(|d| d / n),
            entropy_loss: self.entropy.map(|e| e / n),
        }
    }
}

fn steps_per_epoch(pool_len: usize, batch_size: usize) -> usize {
    pool_len.div_ceil(batch_size).max(1)
}

/// Trains a model for one active-learning round.
///
/// A fresh model is initialized from `seed` unless `warm_start` is given.
/// Labeled minibatches are drawn uniformly with replacement from the pooled
/// labeled rows, with no per-domain quota; unlabeled minibatches of the same
/// size come uniformly from the unlabeled target pool.
///
/// * `Adversarial`: min-max steps on (L_s ∪ L_t, U_t).
/// * `Joint`: supervised steps on L_s ∪ L_t; the discriminator trains on
///   detached features.
/// * `FineTune`: supervised on L_s, then on L_t with a fresh optimizer at a
///   reduced learning rate; the discriminator is then fit on the final frozen
///   features, labeled pool versus U_t.
/// * `TargetOnly`: supervised on L_t; discriminator on L_t versus U_t.
pub fn train_round(
    config: &DannConfig,
    scheme: TrainScheme,
    data: &TrainData<'_>,
    schedule: &Schedule,
    options: TrainOptions,
    seed: u64,
    warm_start: Option<DannModel>,
) -> Result<(DannModel, Vec<EpochLoss>)> {
    schedule.validate()?;
    let mut model = match warm_start {
        Some(m) => m,
        None => DannModel::new(config, seed)?,
    };
    let target_domain = match options.labeled_target_side {
        LabeledTargetSide::Labeled => SOURCE_DOMAIN,
        LabeledTargetSide::Target => TARGET_DOMAIN,
    };
    let source = (data.source, data.source_labels, SOURCE_DOMAIN);
    let labeled_target = (data.labeled_target, data.labeled_target_labels, target_domain);
    let has_target_labels = !data.labeled_target_labels.is_empty();
    let mut trace = Vec::new();

    match scheme {
        TrainScheme::Adversarial | TrainScheme::Joint => {
            let pool = LabeledPool::build(&[source, labeled_target])?;
            if pool.len() == 0 {
                return Err(scheme_error(scheme, "no labeled rows"));
            }
            run_phases(&mut model, &pool, data.unlabeled_target, schedule, 1.0, scheme.name(), &mut trace, |m, lab, unl| {
                match (scheme, unl) {
                    (TrainScheme::Adversarial, Some(u)) => m.adversarial_step(lab, u),
                    _ => m.supervised_step(lab, unl, StepOptions {
                        entropy_regularizer: true,
                        train_discriminator: true,
                    }),
                }
            })?;
        }
        TrainScheme::FineTune => {
            let source_pool = LabeledPool::build(&[source])?;
            if source_pool.len() == 0 {
                return Err(scheme_error(scheme, "fine-tuning needs labeled source rows"));
            }
            let no_unlabeled = Matrix::zeros(0, data.source.cols());
            let supervised = StepOptions {
                entropy_regularizer: false,
                train_discriminator: false,
            };
            run_phases(&mut model, &source_pool, &no_unlabeled, schedule, 1.0, "pretrain", &mut trace, |m, lab, _| {
                m.supervised_step(lab, None, supervised)
            })?;
            if has_target_labels {
                let target_pool = LabeledPool::build(&[labeled_target])?;
                let first_lr = schedule.phases[0].learning_rate * schedule.finetune_lr_factor;
                model.reset_task_optimizers(first_lr);
                run_phases(&mut model, &target_pool, &no_unlabeled, schedule, schedule.finetune_lr_factor, "finetune", &mut trace, |m, lab, _| {
                    m.supervised_step(lab, None, supervised)
                })?;
            }
            fit_discriminator(&mut model, &[source, labeled_target], data.unlabeled_target, schedule, &mut trace)?;
        }
        TrainScheme::TargetOnly => {
            if !has_target_labels {
                return Err(scheme_error(scheme, "labeled target set is empty"));
            }
            let pool = LabeledPool::build(&[labeled_target])?;
            run_phases(&mut model, &pool, data.unlabeled_target, schedule, 1.0, scheme.name(), &mut trace, |m, lab, unl| {
                m.supervised_step(lab, unl, StepOptions {
                    entropy_regularizer: false,
                    train_discriminator: unl.is_some(),
                })
            })?;
        }
    }
    Ok((model, trace))
}

fn scheme_error(scheme: TrainScheme, reason: &str) -> Error {
    Error::SchemeData {
        scheme: scheme.name().to_string(),
        reason: reason.to_string(),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_phases<F>(
    model: &mut DannModel,
    pool: &LabeledPool,
    unlabeled: &Matrix,
    schedule: &Schedule,
    lr_factor: f64,
    stage: &str,
    trace: &mut Vec<EpochLoss>,
    mut step: F,
) -> Result<()>
where
    F: FnMut(&mut DannModel, &LabeledBatch, Option<&UnlabeledBatch>) -> Result<LossReport>,
{
    let steps = steps_per_epoch(pool.len(), schedule.batch_size);
    let mut epoch = 0;
    for phase in &schedule.phases {
        model.set_learning_rate(phase.learning_rate * lr_factor);
        for _ in 0..phase.epochs {
            let mut acc = EpochAccumulator::default();
            for _ in 0..steps {
                let lab = pool.batch(schedule.batch_size, &mut model.rng)?;
                let unl = unlabeled_batch(unlabeled, schedule.batch_size, &mut model.rng);
                let report = step(model, &lab, unl.as_ref())?;
                acc.add(&report);
            }
            trace.push(acc.finish(stage, epoch, true));
            epoch += 1;
        }
    }
    Ok(())
}

/// Fits the discriminator alone on frozen features: labeled rows versus the
/// unlabeled target pool.
fn fit_discriminator(
    model: &mut DannModel,
    labeled: &[(&Matrix, &[usize], u8)],
    unlabeled: &Matrix,
    schedule: &Schedule,
    trace: &mut Vec<EpochLoss>,
) -> Result<()> {
    if unlabeled.is_empty() {
        return Ok(());
    }
    let pool = LabeledPool::build(labeled)?;
    let pool_features = model.features(&pool.features)?;
    let unlabeled_features = model.features(unlabeled)?;
    let steps = steps_per_epoch(pool.len(), schedule.batch_size);
    let bs = schedule.batch_size;
    let mut epoch = 0;
    for phase in &schedule.phases {
        model.set_learning_rate(phase.learning_rate);
        for _ in 0..phase.epochs {
            let mut total = 0.0;
            for _ in 0..steps {
                let li: Vec<usize> = (0..bs).map(|_| model.rng.random_range(0..pool.len())).collect();
                let ui: Vec<usize> = (0..bs)
                    .map(|_| model.rng.random_range(0..unlabeled_features.rows()))
                    .collect();
                let x = pool_features
                    .select_rows(&li)
                    .vstack(&unlabeled_features.select_rows(&ui))?;
                let mut domains: Vec<u8> = li.iter().map(|&i| pool.domains[i]).collect();
                domains.extend(std::iter::repeat_n(TARGET_DOMAIN, bs));
                total += model.discriminator_step(&x, &domains)?;
            }
            trace.push(EpochLoss {
                stage: "discriminator".into(),
                epoch,
                class_loss: None,
                domain_loss: Some(total / steps as f64),
                entropy_loss: None,
            });
            epoch += 1;
        }
    }
    Ok(())
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(model: &DannModel, features: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if features.rows() != labels.len() {
        return Err(Error::dims("evaluation labels", features.rows(), labels.len()));
    }
    let predicted = model.predict_labels(features)?;
    let correct = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / labels.len() as f64)
}
