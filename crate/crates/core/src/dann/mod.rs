//! Domain-adversarial model: feature extractor, class predictor and domain
//! discriminator, trained under one of four schemes.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use model::{
    AdversarialGradients, DannConfig, DannModel, HeadGradients, LabeledBatch, LossReport,
    ModelDims, Predictions, StepOptions, UnlabeledBatch, DOMAIN_PROB_CLAMP, SOURCE_DOMAIN,
    TARGET_DOMAIN,
};
pub use train::{
    accuracy, train_round, EpochLoss, LabeledTargetSide, Phase, Schedule, TrainData,
    TrainOptions, TrainScheme,
};
