//! Model checkpoints.
//!
//! A checkpoint is a single JSON document holding the backbone name,
//! the head configuration and every parameter tensor (flattened
//! row-major). JSON `f64` round-trips are exact, so save/load preserves
//! weights bit for bit. Loading the backbone tensors alone into a
//! freshly initialized classifier is the transfer-learning path: the
//! head starts over while the feature extractor arrives pre-trained.

use super::classifier::{Classifier, HeadConfig};
use std::path::{Path, PathBuf};

const FORMAT: &str = "datscan-checkpoint/1";

#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointFile {
    format: String,
    backbone: String,
    head: HeadConfig,
    tensors: Vec<TensorRecord>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint {path:?} not found")]
    MissingFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error on checkpoint {path:?}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path:?} is not valid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported checkpoint format {found:?} (expected {FORMAT:?})")]
    BadFormat { found: String },
    #[error(transparent)]
    UnknownBackbone(#[from] super::backbone::UnknownBackbone),
    #[error("tensor {name:?}: {reason}")]
    TensorMismatch { name: String, reason: String },
    #[error("cannot save: tensor {name:?} contains a non-finite value")]
    NonFinite { name: String },
}

/// Serialize the full model.
pub fn save_checkpoint(model: &mut Classifier, path: &Path) -> Result<(), CheckpointError> {
    let mut tensors = Vec::new();
    for p in model.all_params() {
        if p.value.iter().any(|v| !v.is_finite()) {
            return Err(CheckpointError::NonFinite { name: p.name });
        }
        tensors.push(TensorRecord {
            shape: p.value.shape().to_vec(),
            data: p.value.iter().cloned().collect(),
            name: p.name,
        });
    }
    let file = CheckpointFile {
        format: FORMAT.to_string(),
        backbone: model.backbone_name().to_string(),
        head: model.head_config(),
        tensors,
    };
    let json = serde_json::to_string(&file).expect("checkpoint serialization cannot fail");
    std::fs::write(path, json).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<CheckpointFile, CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            CheckpointError::MissingFile {
                path: path.to_path_buf(),
                source,
            }
        } else {
            CheckpointError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|source| CheckpointError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    if file.format != FORMAT {
        return Err(CheckpointError::BadFormat { found: file.format });
    }
    Ok(file)
}

/// Copy `records` into the model parameters selected by `filter`,
/// requiring an exact one-to-one match on names and shapes.
fn apply_tensors(
    model: &mut Classifier,
    records: &[TensorRecord],
    filter: impl Fn(&str) -> bool,
) -> Result<(), CheckpointError> {
    use std::collections::HashMap;
    let by_name: HashMap<&str, &TensorRecord> = records
        .iter()
        .filter(|r| filter(&r.name))
        .map(|r| (r.name.as_str(), r))
        .collect();

    let mut applied = 0;
    for mut p in model.all_params() {
        if !filter(&p.name) {
            continue;
        }
        let record = by_name
            .get(p.name.as_str())
            .ok_or_else(|| CheckpointError::TensorMismatch {
                name: p.name.clone(),
                reason: "missing from checkpoint".into(),
            })?;
        if record.shape != p.value.shape() {
            return Err(CheckpointError::TensorMismatch {
                name: p.name.clone(),
                reason: format!(
                    "shape {:?} in checkpoint vs {:?} in model",
                    record.shape,
                    p.value.shape()
                ),
            });
        }
        if record.data.len() != p.value.len() {
            return Err(CheckpointError::TensorMismatch {
                name: p.name.clone(),
                reason: format!(
                    "{} values for shape {:?}",
                    record.data.len(),
                    record.shape
                ),
            });
        }
        for (slot, &v) in p.value.iter_mut().zip(&record.data) {
            *slot = v;
        }
        applied += 1;
    }
    if applied != by_name.len() {
        let model_names: std::collections::HashSet<String> = model
            .all_params()
            .iter()
            .map(|p| p.name.clone())
            .collect();
        let orphan = by_name
            .keys()
            .find(|n| !model_names.contains(**n))
            .expect("some checkpoint tensor is unmatched");
        return Err(CheckpointError::TensorMismatch {
            name: orphan.to_string(),
            reason: "not present in the model".into(),
        });
    }
    Ok(())
}

/// Rebuild the full classifier recorded at `path`.
pub fn load_checkpoint(path: &Path) -> Result<Classifier, CheckpointError> {
    let file = read_file(path)?;
    // Seed value is irrelevant: every tensor is overwritten below.
    let mut model = Classifier::from_seed(&file.backbone, file.head, 0)?;
    apply_tensors(&mut model, &file.tensors, |_| true)?;
    Ok(model)
}

/// Copy only the `backbone.*` tensors of the checkpoint into `model`,
/// leaving the (freshly initialized) head untouched. The checkpoint
/// must have been written by the same backbone architecture.
pub fn load_backbone_weights(model: &mut Classifier, path: &Path) -> Result<(), CheckpointError> {
    let file = read_file(path)?;
    if file.backbone != model.backbone_name() {
        return Err(CheckpointError::TensorMismatch {
            name: "backbone".into(),
            reason: format!(
                "checkpoint holds {:?}, model is {:?}",
                file.backbone,
                model.backbone_name()
            ),
        });
    }
    apply_tensors(model, &file.tensors, |name| name.starts_with("backbone."))
}
