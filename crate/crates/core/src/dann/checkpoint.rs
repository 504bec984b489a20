//! Versioned JSON checkpoints. Floats are written with shortest round-trip
//! formatting and parsed exactly, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::DannModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "aada-dann-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    input_dim: usize,
    feature_dim: usize,
    num_classes: usize,
    model: DannModel,
}

pub fn checkpoint_to_string(model: &DannModel) -> Result<String> {
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        input_dim: model.input_dim(),
        feature_dim: model.feature_extractor.output_dim(),
        num_classes: model.num_classes,
        model: model.clone(),
    };
    Ok(serde_json::to_string_pretty(&ckpt)?)
}

pub fn checkpoint_from_str(text: &str) -> Result<DannModel> {
    let ckpt: Checkpoint = serde_json::from_str(text)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!("not a checkpoint: format `{}`", ckpt.format)));
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {} is not supported",
            ckpt.version
        )));
    }
    ckpt.model.validate()?;
    let m = &ckpt.model;
    if m.input_dim() != ckpt.input_dim
        || m.feature_extractor.output_dim() != ckpt.feature_dim
        || m.num_classes != ckpt.num_classes
    {
        return Err(Error::Format("checkpoint header disagrees with its layers".into()));
    }
    Ok(ckpt.model)
}

pub fn save_checkpoint(model: &DannModel, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<DannModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
