use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::state::{ActiveState, Oracle};
use crate::dann::{
    accuracy, train_round, DannConfig, DannModel, EpochLoss, LabeledTargetSide, ModelDims,
    Schedule, TrainData, TrainOptions, TrainScheme,
};
use crate::data::DomainDataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::sampling::{select, Strategy};

/// Everything one active-learning run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub scheme: TrainScheme,
    pub strategy: Strategy,
    pub model: ModelDims,
    pub lambda_adv: f64,
    pub lambda_ent: f64,
    pub schedule: Schedule,
    /// Labels bought in each round; its length is the number of rounds.
    pub budgets: Vec<usize>,
    /// Use random selection in round 1 regardless of strategy.
    pub warmup_random: bool,
    pub labeled_target_side: LabeledTargetSide,
    /// Continue from the previous round's model instead of re-initializing.
    pub warm_start: bool,
    pub seed: u64,
}

impl LoopConfig {
    pub fn max_round(&self) -> usize {
        self.budgets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.budgets.iter().position(|&b| b == 0) {
            return Err(Error::config(format!("active.budgets[{i}]"), "must be positive"));
        }
        self.schedule.validate()
    }
}

/// The three datasets of one run. Pool labels are only reachable through the
/// oracle.
#[derive(Debug, Clone, Copy)]
pub struct LoopData<'a> {
    pub source: &'a DomainDataset,
    pub target_pool: &'a DomainDataset,
    pub target_test: &'a DomainDataset,
}

/// One selected row with the scores it was chosen by.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    /// Target-pool index.
    pub index: usize,
    pub score: f64,
    pub diversity_cue: f64,
    pub uncertainty_cue: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub budget: usize,
    /// Labeled target count after this round's query.
    pub n_labeled: usize,
    /// Strategy actually applied this round, if any selection happened.
    pub selection_strategy: Option<Strategy>,
    /// Target-pool indices bought this round, in pick order.
    pub selected: Vec<usize>,
    pub queried_labels: Vec<usize>,
    /// Scores of every row of this round's unlabeled pool.
    pub scores: Vec<ScoreRow>,
    /// Held-out target accuracy of the model trained this round; absent when
    /// the scheme could not train yet.
    pub test_accuracy: Option<f64>,
    pub losses: Vec<EpochLoss>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: LoopConfig,
    pub dataset: String,
    pub num_classes: usize,
    pub pool_size: usize,
    pub test_size: usize,
    pub notes: Vec<String>,
    pub rounds: Vec<RoundRecord>,
}

impl RunLog {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.rounds.last().and_then(|r| r.test_accuracy)
    }

    /// `(n_labeled, accuracy)` per round where a model was evaluated.
    pub fn curve(&self) -> Vec<(usize, f64)> {
        self.rounds
            .iter()
            .filter_map(|r| r.test_accuracy.map(|a| (r.n_labeled, a)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog,
    pub final_model: Option<DannModel>,
    pub final_state: ActiveState,
    /// Wall-clock seconds per round; kept out of the log so logs stay
    /// reproducible byte for byte.
    pub round_seconds: Vec<f64>,
}

const TRAIN_STREAM: u64 = 0x7472_6169_6e00_0000;
const SELECT_STREAM: u64 = 0x7365_6c65_6374_0000;

/// Per-round seed for a purpose, independent of everything that happened in
/// earlier rounds.
pub fn derive_seed(seed: u64, round: usize, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add(stream)
        .wrapping_add((round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Held-out accuracy; argmax ties go to the lowest class.
pub fn evaluate(model: &DannModel, test: &DomainDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    accuracy(model, &test.features, &test.labels)
}

fn notes(config: &LoopConfig) -> Vec<String> {
    let mut notes = vec![
        "feature extractor, class predictor and discriminator are dense ReLU stacks (no convolutions)".to_string(),
        format!(
            "k-means: k-means++ seeding, at most {} iterations, relative inertia tolerance {}",
            crate::sampling::KMEANS_MAX_ITERATIONS,
            crate::sampling::KMEANS_RELATIVE_TOLERANCE
        ),
        "ties in every ranking resolve to the lowest index".to_string(),
    ];
    if config.scheme == TrainScheme::FineTune {
        notes.push(format!(
            "fine-tuning learning rate = {} x base",
            config.schedule.finetune_lr_factor
        ));
    }
    notes
}

/// Runs the full loop: initial training on (L_s, U_t), then per round score
/// U_t, buy `b` labels from the oracle, move them to L_t, retrain and
/// evaluate on the held-out target set.
pub fn run_aada(config: &LoopConfig, data: LoopData<'_>, oracle: &Oracle) -> Result<RunOutcome> {
    config.validate()?;
    let pool = data.target_pool;
    if oracle.len() != pool.len() {
        return Err(Error::dims("oracle coverage", pool.len(), oracle.len()));
    }
    let total: usize = config.budgets.iter().sum();
    if total > pool.len() {
        return Err(Error::BudgetExhausted {
            requested: total,
            available: pool.len(),
        });
    }
    let dann = DannConfig {
        input_dim: data.source.features.cols(),
        num_classes: data.source.num_classes,
        dims: config.model.clone(),
        lambda_adv: config.lambda_adv,
        lambda_ent: config.lambda_ent,
    };
    dann.validate()?;
    let options = TrainOptions {
        labeled_target_side: config.labeled_target_side,
    };

    let mut state = ActiveState::new(pool.len());
    let mut rounds = Vec::with_capacity(config.max_round() + 1);
    let mut round_seconds = Vec::with_capacity(config.max_round() + 1);

    let train = |state: &ActiveState, round: usize, previous: Option<&DannModel>| -> Result<Option<(DannModel, Vec<EpochLoss>)>> {
        if state.labeled_target().is_empty() && !config.scheme.trains_without_target_labels() {
            return Ok(None);
        }
        let labeled_x = pool.features.select_rows(state.labeled_target());
        let unlabeled_x = pool.features.select_rows(state.unlabeled_target());
        let td = TrainData {
            source: &data.source.features,
            source_labels: &data.source.labels,
            labeled_target: &labeled_x,
            labeled_target_labels: state.labeled_target_labels(),
            unlabeled_target: &unlabeled_x,
        };
        let warm = if config.warm_start { previous.cloned() } else { None };
        train_round(
            &dann,
            config.scheme,
            &td,
            &config.schedule,
            options,
            derive_seed(config.seed, round, TRAIN_STREAM),
            warm,
        )
        .map(Some)
    };

    let started = Instant::now();
    let mut model = None;
    let mut record = RoundRecord {
        round: 0,
        budget: 0,
        n_labeled: 0,
        selection_strategy: None,
        selected: Vec::new(),
        queried_labels: Vec::new(),
        scores: Vec::new(),
        test_accuracy: None,
        losses: Vec::new(),
    };
    if let Some((m, losses)) = train(&state, 0, None)? {
        record.test_accuracy = Some(evaluate(&m, data.target_test)?);
        record.losses = losses;
        model = Some(m);
    }
    rounds.push(record);
    round_seconds.push(started.elapsed().as_secs_f64());

    for (r, &budget) in config.budgets.iter().enumerate() {
        let round = r + 1;
        let started = Instant::now();
        let unlabeled_x = pool.features.select_rows(state.unlabeled_target());
        let labeled_x = pool.features.select_rows(state.labeled_target());
        let requested = match (&model, config.warmup_random && round == 1) {
            (Some(_), false) => config.strategy,
            _ => Strategy::Random,
        };
        let fallback;
        let scorer = match &model {
            Some(m) => m,
            None => {
                // no trained model yet: an untrained one only supplies cue values
                fallback = DannModel::new(&dann, derive_seed(config.seed, round, TRAIN_STREAM))?;
                &fallback
            }
        };
        let selection = select(
            requested,
            scorer,
            &unlabeled_x,
            &labeled_x,
            budget,
            derive_seed(config.seed, round, SELECT_STREAM),
        )?;
        let unlabeled_before = state.unlabeled_target().to_vec();
        let mut scores: Vec<ScoreRow> = selection
            .candidates
            .iter()
            .map(|c| ScoreRow {
                index: unlabeled_before[c.index],
                score: c.score,
                diversity_cue: c.diversity_cue,
                uncertainty_cue: c.uncertainty_cue,
                selected: false,
            })
            .collect();
        for &p in &selection.indices {
            scores[p].selected = true;
        }
        let selected = state.label(&selection.indices, oracle)?;
        let queried_labels = state.labeled_target_labels()[state.labeled_target().len() - selected.len()..].to_vec();

        let trained = train(&state, round, model.as_ref())?;
        let (test_accuracy, losses) = match &trained {
            Some((m, losses)) => (Some(evaluate(m, data.target_test)?), losses.clone()),
            None => (None, Vec::new()),
        };
        if let Some((m, _)) = trained {
            model = Some(m);
        }
        rounds.push(RoundRecord {
            round,
            budget,
            n_labeled: state.labeled_target().len(),
            selection_strategy: Some(selection.strategy),
            selected,
            queried_labels,
            scores,
            test_accuracy,
            losses,
        });
        round_seconds.push(started.elapsed().as_secs_f64());
    }

    Ok(RunOutcome {
        log: RunLog {
            config: config.clone(),
            dataset: format!(
                "source: {} | target: {}",
                data.source.provenance, data.target_pool.provenance
            ),
            num_classes: dann.num_classes,
            pool_size: pool.len(),
            test_size: data.target_test.len(),
            notes: notes(config),
            rounds,
        },
        final_model: model,
        final_state: state,
        round_seconds,
    })
}

/// Selects the unlabeled rows of `pool` given a state; convenience for
/// callers that inspect a run.
pub fn unlabeled_features(pool: &DomainDataset, state: &ActiveState) -> Matrix {
    pool.features.select_rows(state.unlabeled_target())
}
