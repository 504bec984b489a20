//! The active-learning loop and aggregation of its logs.

mod run;
mod state;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use run::{
    derive_seed, evaluate, run_aada, unlabeled_features, LoopConfig, LoopData, RoundRecord,
    RunLog, RunOutcome, ScoreRow,
};
pub use state::{ActiveState, Oracle};

/// One point of an aggregated accuracy curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub round: usize,
    pub n_labeled: usize,
    pub scheme: String,
    pub strategy: String,
    pub mean_acc: f64,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub sd_acc: f64,
    pub n_seeds: usize,
}

/// Aggregates runs of one (scheme, strategy) group into a curve, averaging
/// each round over the seeds that produced an accuracy. Runs must share the
/// budgets and dataset.
pub fn aggregate_curve(logs: &[RunLog]) -> Result<Vec<CurveRow>> {
    let first = logs.first().ok_or(Error::Empty("run logs"))?;
    for log in &logs[1..] {
        if log.config.budgets != first.config.budgets {
            return Err(Error::IncompatibleLogs("budget sequences differ".into()));
        }
        if log.dataset != first.dataset {
            return Err(Error::IncompatibleLogs("datasets differ".into()));
        }
        if log.config.scheme != first.config.scheme || log.config.strategy != first.config.strategy {
            return Err(Error::IncompatibleLogs("mixed scheme/strategy groups".into()));
        }
    }
    let mut rows = Vec::with_capacity(first.rounds.len());
    for (r, record) in first.rounds.iter().enumerate() {
        let accs: Vec<f64> = logs
            .iter()
            .filter_map(|l| l.rounds.get(r).and_then(|x| x.test_accuracy))
            .collect();
        if accs.is_empty() {
            continue;
        }
        let (mean, sd) = mean_sd(&accs);
        rows.push(CurveRow {
            round: record.round,
            n_labeled: record.n_labeled,
            scheme: first.config.scheme.name().to_string(),
            strategy: first.config.strategy.name().to_string(),
            mean_acc: mean,
            sd_acc: sd,
            n_seeds: accs.len(),
        });
    }
    Ok(rows)
}

/// Groups logs by (scheme, strategy) and aggregates each. Groups and the
/// seeds inside them are ordered, so input order never changes the table.
pub fn aggregate_curves(logs: &[RunLog]) -> Result<Vec<CurveRow>> {
    if logs.is_empty() {
        return Err(Error::Empty("run logs"));
    }
    let mut groups: Vec<((_, _), Vec<RunLog>)> = Vec::new();
    for log in logs {
        let key = (log.config.scheme, log.config.strategy);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(log.clone()),
            None => groups.push((key, vec![log.clone()])),
        }
    }
    groups.sort_by_key(|(k, _)| *k);
    let mut out = Vec::new();
    for (_, mut group) in groups {
        group.sort_by_key(|l| l.config.seed);
        out.extend(aggregate_curve(&group)?);
    }
    Ok(out)
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every config against the same data in parallel. Results keep the
/// order of `configs`.
pub fn compare_strategies(
    configs: &[LoopConfig],
    data: LoopData<'_>,
    oracle: &Oracle,
) -> Vec<Result<RunOutcome>> {
    configs
        .par_iter()
        .map(|c| run_aada(c, data, oracle))
        .collect()
}
