use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::active_loop::LoopConfig;
use crate::dann::{LabeledTargetSide, ModelDims, Phase, Schedule, TrainScheme};
use crate::data::ShiftSpec;
use crate::error::{Error, Result};
use crate::sampling::Strategy;

const TOY_PRESET: &str = include_str!("presets/toy.toml");
const PAPER_DIGITS_PRESET: &str = include_str!("presets/paper_digits.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    #[default]
    Toy,
    PaperDigits,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Toy => "toy",
            Preset::PaperDigits => "paper-digits",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Preset::Toy => TOY_PRESET,
            Preset::PaperDigits => PAPER_DIGITS_PRESET,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Preset::Toy),
            "paper-digits" => Ok(Preset::PaperDigits),
            other => Err(Error::config("preset", format!("unknown preset `{other}` (expected toy or paper-digits)"))),
        }
    }
}

/// Paths to a source and a target IDX corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub source_images: PathBuf,
    pub source_labels: PathBuf,
    pub target_images: PathBuf,
    pub target_labels: PathBuf,
    /// Rows kept from each corpus after a seeded shuffle; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_subsample: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_subsample: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Share of the target rows that forms the unlabeled pool; the rest is
    /// the held-out test set.
    pub pool_fraction: f64,
    /// Standardize every feature with source statistics.
    pub standardize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<ShiftSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idx: Option<IdxSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub scheme: TrainScheme,
    pub lambda_adv: f64,
    pub lambda_ent: f64,
    pub batch_size: usize,
    pub finetune_lr_factor: f64,
    pub labeled_target_side: LabeledTargetSide,
    pub warm_start: bool,
    pub phases: Vec<Phase>,
}

impl TrainingConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            phases: self.phases.clone(),
            batch_size: self.batch_size,
            finetune_lr_factor: self.finetune_lr_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveConfig {
    pub strategy: Strategy,
    /// Per-round budgets. A single entry repeats for `max_round` rounds.
    pub budgets: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_round: Option<usize>,
    pub warmup_random: bool,
}

/// Lists crossed by `grid`; empty means the single value from
/// `training.scheme` or `active.strategy`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub schemes: Vec<TrainScheme>,
    #[serde(default)]
    pub strategies: Vec<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Save the final model of every run.
    pub checkpoints: bool,
    /// Concurrent grid cells; all available cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub dataset: DatasetConfig,
    pub model: ModelDims,
    pub training: TrainingConfig,
    pub active: ActiveConfig,
    #[serde(default)]
    pub grid: GridConfig,
    pub output: OutputConfig,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Format(format!("{origin}: {e}")))
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Result<Self> {
        Self::from_preset_and_str(preset, "")
    }

    /// Parses `text` layered over `preset`: tables merge key by key, any other
    /// value replaces the preset's. Unknown keys anywhere are rejected.
    pub fn from_preset_and_str(preset: Preset, text: &str) -> Result<Self> {
        let mut base = parse_table(preset.source(), preset.name())?;
        let over = parse_table(text, "config")?;
        let dataset_choice = over.get("dataset").and_then(|d| d.as_table()).map(|d| {
            (d.contains_key("synthetic"), d.contains_key("idx"))
        });
        merge(&mut base, over);
        // choosing IDX files in the override replaces the preset's synthetic data
        if let Some((false, true)) = dataset_choice {
            if let Some(toml::Value::Table(d)) = base.get_mut("dataset") {
                d.remove("synthetic");
            }
        }
        let config: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(base))
            .map_err(|e| {
                let path = e.path().to_string();
                Error::config(path, e.into_inner().to_string())
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(preset: Preset, path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_preset_and_str(preset, &text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Budgets after expanding a single entry over `max_round` rounds.
    pub fn round_budgets(&self) -> Result<Vec<usize>> {
        let mut budgets = Vec::with_capacity(self.active.budgets.len());
        for (i, &b) in self.active.budgets.iter().enumerate() {
            if b <= 0 {
                return Err(Error::config(
                    format!("active.budgets[{i}]"),
                    format!("must be a positive label count, got {b}"),
                ));
            }
            budgets.push(b as usize);
        }
        match self.active.max_round {
            None => Ok(budgets),
            Some(rounds) if budgets.len() == 1 => Ok(vec![budgets[0]; rounds]),
            Some(rounds) if rounds <= budgets.len() => {
                budgets.truncate(rounds);
                Ok(budgets)
            }
            Some(rounds) => Err(Error::config(
                "active.max_round",
                format!("{rounds} rounds but only {} budgets given", budgets.len()),
            )),
        }
    }

    pub fn schemes(&self) -> Vec<TrainScheme> {
        if self.grid.schemes.is_empty() {
            vec![self.training.scheme]
        } else {
            self.grid.schemes.clone()
        }
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        if self.grid.strategies.is_empty() {
            vec![self.active.strategy]
        } else {
            self.grid.strategies.clone()
        }
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        let d = &self.dataset;
        if !(d.pool_fraction > 0.0 && d.pool_fraction < 1.0) {
            return Err(Error::config("dataset.pool_fraction", "must lie strictly between 0 and 1"));
        }
        match (&d.synthetic, &d.idx) {
            (Some(spec), None) => spec.validate()?,
            (None, Some(_)) => {}
            _ => {
                return Err(Error::config(
                    "dataset",
                    "exactly one of [dataset.synthetic] and [dataset.idx] must be given",
                ))
            }
        }
        let m = &self.model;
        if m.feature_dim == 0 {
            return Err(Error::config("model.feature_dim", "must be positive"));
        }
        for (name, widths) in [
            ("model.feature_hidden", &m.feature_hidden),
            ("model.class_hidden", &m.class_hidden),
            ("model.discriminator_hidden", &m.discriminator_hidden),
        ] {
            if let Some(i) = widths.iter().position(|&w| w == 0) {
                return Err(Error::config(format!("{name}[{i}]"), "layer width must be positive"));
            }
        }
        let t = &self.training;
        if !(t.lambda_adv >= 0.0 && t.lambda_adv.is_finite()) {
            return Err(Error::config("training.lambda_adv", "must be finite and >= 0"));
        }
        if !(t.lambda_ent >= 0.0 && t.lambda_ent.is_finite()) {
            return Err(Error::config("training.lambda_ent", "must be finite and >= 0"));
        }
        t.schedule().validate()?;
        self.round_budgets()?;
        if self.output.workers == Some(0) {
            return Err(Error::config("output.workers", "must be positive"));
        }
        Ok(())
    }

    /// The loop configuration of one grid cell.
    pub fn loop_config(&self, scheme: TrainScheme, strategy: Strategy, seed: u64) -> Result<LoopConfig> {
        Ok(LoopConfig {
            scheme,
            strategy,
            model: self.model.clone(),
            lambda_adv: self.training.lambda_adv,
            lambda_ent: self.training.lambda_ent,
            schedule: self.training.schedule(),
            budgets: self.round_budgets()?,
            warmup_random: self.active.warmup_random,
            labeled_target_side: self.training.labeled_target_side,
            warm_start: self.training.warm_start,
            seed,
        })
    }

    /// This config narrowed to one cell, as echoed into its run log.
    pub fn cell(&self, scheme: TrainScheme, strategy: Strategy, seed: u64) -> RunConfig {
        let mut c = self.clone();
        c.seeds = vec![seed];
        c.training.scheme = scheme;
        c.active.strategy = strategy;
        c.grid = GridConfig::default();
        c
    }
}
