//! Checkpoints: a safetensors weight blob plus a JSON sidecar holding the
//! model config and training metadata. The sidecar lives next to the blob
//! at `<blob>.json` and can be read without touching the weights.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use safetensors::tensor::{Dtype, TensorView};
use serde::{Deserialize, Serialize};

use super::nn::ParamEntry;
use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::preprocess::PreprocessConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_completed: usize,
    pub final_loss: Option<f64>,
    pub seed: u64,
    pub created_at: DateTime<Utc>,
}

impl TrainingMeta {
    pub fn untrained(seed: u64) -> Self {
        TrainingMeta {
            epochs_completed: 0,
            final_loss: None,
            seed,
            created_at: Utc::now(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: ModelConfig,
    pub training_meta: TrainingMeta,
    /// Preprocessing the weights were trained with; scoring reuses it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocess: Option<PreprocessConfig>,
}

impl CheckpointMeta {
    /// Recorded preprocessing, or the backbone's defaults at its input size.
    pub fn preprocess_or_default(&self) -> PreprocessConfig {
        self.preprocess.clone().unwrap_or_else(|| {
            let base = match self.config.backbone {
                super::BackboneKind::Mini => PreprocessConfig::mini(),
                super::BackboneKind::PretrainedB1 => PreprocessConfig::default(),
            };
            PreprocessConfig {
                target_side: self.config.input_side as u32,
                ..base
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
}

pub fn sidecar_path(blob: &Path) -> PathBuf {
    let mut name = blob.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub(crate) fn copy_f32(view: &TensorView<'_>, entry: &ParamEntry, dst: &mut [f32]) -> Result<()> {
    if view.dtype() != Dtype::F32 {
        return Err(Error::Checkpoint(format!(
            "tensor `{}` has dtype {:?}, expected F32",
            entry.name,
            view.dtype()
        )));
    }
    if view.shape() != entry.shape.as_slice() {
        return Err(Error::Checkpoint(format!(
            "tensor `{}` has shape {:?}, expected {:?}",
            entry.name,
            view.shape(),
            entry.shape
        )));
    }
    for (d, chunk) in dst.iter_mut().zip(view.data().chunks_exact(4)) {
        *d = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
    }
    Ok(())
}

/// Writes the blob and its sidecar.
pub fn save(model: &Model, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    if &meta.config != model.config() {
        return Err(Error::Checkpoint("metadata config differs from model config".into()));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let bytes: Vec<u8> = model.params().iter().flat_map(|v| v.to_le_bytes()).collect();
    let mut views = Vec::with_capacity(model.layout().entries.len());
    for e in &model.layout().entries {
        let slice = &bytes[e.offset * 4..(e.offset + e.len()) * 4];
        let view = TensorView::new(Dtype::F32, e.shape.clone(), slice)
            .map_err(|err| Error::Checkpoint(format!("{}: {err}", e.name)))?;
        views.push((e.name.clone(), view));
    }
    safetensors::serialize_to_file(views, &None, path)
        .map_err(|e| Error::Checkpoint(format!("writing {}: {e}", path.display())))?;
    let sidecar = sidecar_path(path);
    std::fs::write(&sidecar, serde_json::to_vec_pretty(meta)?)
        .map_err(|e| Error::io(format!("writing {}", sidecar.display()), e))?;
    Ok(())
}

/// Reads only the sidecar metadata.
pub fn read_meta(path: &Path) -> Result<CheckpointMeta> {
    let sidecar = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(format!("reading {}", sidecar.display()), e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: format version {} unsupported (expected {FORMAT_VERSION})",
            sidecar.display(),
            meta.format_version
        )));
    }
    Ok(meta)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let meta = read_meta(path)?;
    let layout = super::layout_of(&meta.config);
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let tensors = safetensors::SafeTensors::deserialize(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: corrupt weight blob: {e}", path.display())))?;
    if tensors.len() != layout.entries.len() {
        return Err(Error::Checkpoint(format!(
            "{}: blob holds {} tensors, config expects {}",
            path.display(),
            tensors.len(),
            layout.entries.len()
        )));
    }
    let mut params = vec![0.0f32; layout.total];
    for e in &layout.entries {
        let view = tensors
            .tensor(&e.name)
            .map_err(|_| Error::Checkpoint(format!("{}: missing tensor `{}`", path.display(), e.name)))?;
        copy_f32(&view, e, &mut params[e.offset..e.offset + e.len()])?;
    }
    let model = Model::from_parts(meta.config.clone(), params)?;
    Ok(Checkpoint { model, meta })
}

/// Loads and rejects a checkpoint whose architecture differs from `expected`.
pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Checkpoint> {
    let ckpt = load(path)?;
    let got = &ckpt.meta.config;
    if got.backbone != expected.backbone
        || got.input_side != expected.input_side
        || got.feature_dim != expected.feature_dim
        || got.head_outputs != expected.head_outputs
    {
        return Err(Error::Checkpoint(format!(
            "{}: checkpoint config {:?}/{}px does not match expected {:?}/{}px",
            path.display(),
            got.backbone,
            got.input_side,
            expected.backbone,
            expected.input_side
        )));
    }
    Ok(ckpt)
}
