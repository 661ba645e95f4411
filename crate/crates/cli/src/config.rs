//! Training configuration files (YAML or JSON).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use paintscore::model::{BackboneKind, ModelConfig};
use paintscore::preprocess::PreprocessConfig;
use paintscore::training::Hyperparams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub backbone: BackboneKind,
    #[serde(default)]
    pub input_side: Option<usize>,
    #[serde(default)]
    pub freeze_backbone: bool,
    #[serde(default)]
    pub pretrained_weights: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub manifest: PathBuf,
    #[serde(default)]
    pub images_dir: Option<PathBuf>,
    pub model: ModelSection,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    /// Defaults follow the backbone (mini: 72 px, means/stds 0.5).
    #[serde(default)]
    pub preprocess: Option<PreprocessConfig>,
    /// Every-k split applied when the manifest has no assignment yet.
    #[serde(default = "default_split_every")]
    pub split_every: usize,
    #[serde(default)]
    pub resume: Option<PathBuf>,
}

fn default_split_every() -> usize {
    5
}

impl TrainConfig {
    /// Reads YAML or JSON (by extension; YAML otherwise) and resolves
    /// relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: TrainConfig = if is_json {
            serde_json::from_str(&text).map_err(paintscore::Error::from)
        } else {
            serde_yaml::from_str(&text).map_err(paintscore::Error::from)
        }
        .with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.manifest);
        cfg.images_dir.as_mut().map(fix);
        cfg.model.pretrained_weights.as_mut().map(fix);
        cfg.resume.as_mut().map(fix);
        Ok(cfg)
    }

    pub fn model_config(&self, seed: u64) -> Result<ModelConfig> {
        let mut m = match self.model.backbone {
            BackboneKind::Mini => ModelConfig::mini(),
            BackboneKind::PretrainedB1 => {
                let Some(w) = &self.model.pretrained_weights else {
                    bail!(paintscore::Error::Validation(
                        "pretrained_b1 needs model.pretrained_weights (efficientnet_b1 safetensors export)".into()
                    ));
                };
                ModelConfig::pretrained_b1(w)
            }
        };
        if let Some(side) = self.model.input_side {
            m.input_side = side;
        }
        m.freeze_backbone = self.model.freeze_backbone;
        m.init_seed = seed;
        m.validate()?;
        Ok(m)
    }

    pub fn preprocess_config(&self, model: &ModelConfig, seed: u64) -> PreprocessConfig {
        let mut p = self.preprocess.clone().unwrap_or_else(|| {
            let base = match model.backbone {
                BackboneKind::Mini => PreprocessConfig::mini(),
                BackboneKind::PretrainedB1 => PreprocessConfig::default(),
            };
            PreprocessConfig {
                target_side: model.input_side as u32,
                ..base
            }
        });
        p.seed = seed;
        p
    }
}
