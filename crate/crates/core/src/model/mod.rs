//! The scoring network: a convolutional backbone followed by a linear
//! regression head with one output per rubric component.

pub mod b1;
pub mod checkpoint;
pub mod mini;
pub mod nn;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rubric::{Component, RubricScore, COMPONENT_MAX, TOTAL_MAX};
use nn::{Init, Layer, ParamGroup, ParamKind, ParamLayout, Tape, Tensor};

pub use checkpoint::{Checkpoint, CheckpointMeta, TrainingMeta};

pub const HEAD_OUTPUTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    PretrainedB1,
    Mini,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneKind,
    pub input_side: usize,
    pub head_outputs: usize,
    pub freeze_backbone: bool,
    pub feature_dim: usize,
    /// Seed for every randomly initialized parameter (all of `mini`, the
    /// head of `pretrained_b1`).
    #[serde(default)]
    pub init_seed: u64,
    /// Safetensors export of the published B1 weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained_weights: Option<PathBuf>,
}

impl ModelConfig {
    pub fn mini() -> Self {
        ModelConfig {
            backbone: BackboneKind::Mini,
            input_side: 72,
            head_outputs: HEAD_OUTPUTS,
            freeze_backbone: false,
            feature_dim: mini::FEATURE_DIM,
            init_seed: 0,
            pretrained_weights: None,
        }
    }

    pub fn pretrained_b1(weights: impl Into<PathBuf>) -> Self {
        ModelConfig {
            backbone: BackboneKind::PretrainedB1,
            input_side: 720,
            head_outputs: HEAD_OUTPUTS,
            freeze_backbone: false,
            feature_dim: b1::FEATURE_DIM,
            init_seed: 0,
            pretrained_weights: Some(weights.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_outputs != HEAD_OUTPUTS {
            return Err(Error::validation(format!(
                "head_outputs must be {HEAD_OUTPUTS}, got {}",
                self.head_outputs
            )));
        }
        let expected = match self.backbone {
            BackboneKind::Mini => mini::FEATURE_DIM,
            BackboneKind::PretrainedB1 => b1::FEATURE_DIM,
        };
        if self.feature_dim != expected {
            return Err(Error::validation(format!(
                "feature_dim for {:?} is {expected}, got {}",
                self.backbone, self.feature_dim
            )));
        }
        // three stride-2 stages in mini, five in B1
        let min_side = match self.backbone {
            BackboneKind::Mini => 8,
            BackboneKind::PretrainedB1 => 32,
        };
        if self.input_side < min_side {
            return Err(Error::validation(format!(
                "input_side {} below minimum {min_side}",
                self.input_side
            )));
        }
        Ok(())
    }
}

/// Parameter layout, backbone graph and head graph for a config.
fn topology(config: &ModelConfig) -> (ParamLayout, Layer, Layer) {
    let mut layout = ParamLayout::default();
    let (backbone, head) = match config.backbone {
        BackboneKind::Mini => mini::build(&mut layout, config.head_outputs),
        BackboneKind::PretrainedB1 => b1::build(&mut layout, config.head_outputs),
    };
    (layout, backbone, head)
}

/// Parameter layout of a config without allocating weights.
pub fn layout_of(config: &ModelConfig) -> ParamLayout {
    topology(config).0
}

/// Model output for one image: raw component scores and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub components: [f64; 5],
    pub total: f64,
    pub clamped_total: f64,
}

impl ScoreVector {
    pub fn from_components(components: [f64; 5]) -> Self {
        let total = components.iter().sum();
        ScoreVector {
            components,
            total,
            clamped_total: f64::clamp(total, 0.0, TOTAL_MAX),
        }
    }

    /// Components clamped to `[0, 20]` for display and comparison.
    pub fn clamped_rubric(&self) -> RubricScore {
        RubricScore::from_array_unchecked(self.components.map(|c| c.clamp(0.0, COMPONENT_MAX)))
    }

    pub fn component(&self, c: Component) -> f64 {
        let idx = Component::ALL.iter().position(|x| *x == c).unwrap();
        self.components[idx]
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    layout: ParamLayout,
    params: Vec<f32>,
    backbone: Layer,
    head: Layer,
}

/// Builds a model. `pretrained_b1` requires the published weights on disk;
/// the head is always freshly initialized from `config.init_seed`.
pub fn build(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    let (layout, backbone, head) = topology(config);
    let mut params = init_params(&layout, config.init_seed);
    if config.backbone == BackboneKind::PretrainedB1 {
        let path = config
            .pretrained_weights
            .clone()
            .unwrap_or_else(|| PathBuf::from("efficientnet_b1.safetensors"));
        load_pretrained(&layout, &mut params, &path)?;
    }
    Ok(Model {
        config: config.clone(),
        layout,
        params,
        backbone,
        head,
    })
}

fn init_params(layout: &ParamLayout, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0f32; layout.total];
    for e in &layout.entries {
        let slot = &mut params[e.offset..e.offset + e.len()];
        match e.init {
            Init::Zeros => {}
            Init::Ones => slot.fill(1.0),
            Init::Normal(std) => slot
                .iter_mut()
                .for_each(|v| *v = rng.sample::<f32, _>(StandardNormal) * std),
            Init::Uniform(bound) => slot.iter_mut().for_each(|v| *v = rng.gen_range(-bound..=bound)),
        }
    }
    params
}

fn load_pretrained(layout: &ParamLayout, params: &mut [f32], path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::MissingWeights {
            path: path.to_path_buf(),
        });
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let tensors = safetensors::SafeTensors::deserialize(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    for entry in layout.entries.iter().filter(|e| e.group == ParamGroup::Backbone) {
        let view = tensors
            .tensor(&entry.name)
            .map_err(|_| Error::Checkpoint(format!("{}: missing tensor `{}`", path.display(), entry.name)))?;
        checkpoint::copy_f32(&view, entry, &mut params[entry.offset..entry.offset + entry.len()])?;
    }
    Ok(())
}

impl Model {
    pub(crate) fn from_parts(config: ModelConfig, params: Vec<f32>) -> Result<Self> {
        config.validate()?;
        let (layout, backbone, head) = topology(&config);
        if params.len() != layout.total {
            return Err(Error::Checkpoint(format!(
                "parameter count {} does not match {:?} layout ({})",
                params.len(),
                config.backbone,
                layout.total
            )));
        }
        Ok(Model {
            config,
            layout,
            params,
            backbone,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.layout.trainable_count()
    }

    /// Input width of the regression head.
    pub fn head_input_width(&self) -> usize {
        let e = self.layout.find("head.weight").expect("head exists");
        e.shape[1]
    }

    /// Per-scalar flag: may the optimizer update this parameter?
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.layout.total];
        for e in &self.layout.entries {
            let trainable =
                e.kind != ParamKind::Buffer && (e.group == ParamGroup::Head || !self.config.freeze_backbone);
            mask[e.offset..e.offset + e.len()].fill(trainable);
        }
        mask
    }

    pub fn set_freeze_backbone(&mut self, freeze: bool) {
        self.config.freeze_backbone = freeze;
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let side = self.config.input_side;
        if x.shape() != [3, side, side] {
            return Err(Error::ShapeMismatch {
                expected: format!("3×{side}×{side}"),
                actual: format!("{}×{}×{}", x.c, x.h, x.w),
            });
        }
        Ok(())
    }

    /// Raw head outputs for one input; records intermediates when `tape` is set.
    pub fn forward(&self, x: &Tensor, mut tape: Option<&mut Tape>) -> [f32; 5] {
        let features = self.backbone.forward(&self.params, x.clone(), tape.as_deref_mut());
        let out = self.head.forward(&self.params, features, tape);
        let mut scores = [0.0f32; 5];
        scores.copy_from_slice(&out.data[..HEAD_OUTPUTS]);
        scores
    }

    /// Accumulates parameter gradients for one taped forward pass.
    /// Stops at the head when the backbone is frozen.
    pub fn backward(&self, grad_out: [f32; 5], tape: &mut Tape, grads: &mut [f32]) {
        let g = Tensor::from_vec(HEAD_OUTPUTS, 1, 1, grad_out.to_vec());
        let g = self.head.backward(&self.params, grads, g, tape);
        if !self.config.freeze_backbone {
            self.backbone.backward(&self.params, grads, g, tape);
        }
    }

    pub fn predict_one(&self, x: &Tensor) -> Result<ScoreVector> {
        self.check_input(x)?;
        let raw = self.forward(x, None);
        Ok(ScoreVector::from_components(raw.map(f64::from)))
    }

    pub fn predict(&self, batch: &[Tensor]) -> Result<Vec<ScoreVector>> {
        batch.iter().map(|x| self.predict_one(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(side: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(
            3,
            side,
            side,
            (0..3 * side * side).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn mini_parameter_count_matches_hand_count() {
        // stem 3·16·9+16; per block: expand c·4c+4c, dw 4c·9+4c, project 4c·o+o;
        // fc 40·64+64; head 64·5+5
        let block = |c: usize, o: usize| (c * 4 * c + 4 * c) + (4 * c * 9 + 4 * c) + (4 * c * o + o);
        let expected =
            (3 * 16 * 9 + 16) + block(16, 24) + block(24, 40) + block(40, 40) + (40 * 64 + 64) + (64 * 5 + 5);
        let model = build(&ModelConfig::mini()).unwrap();
        assert_eq!(model.parameter_count(), expected);
        assert_eq!(expected, 28_525);
        assert!(model.parameter_count() < 100_000);
    }

    #[test]
    fn mini_init_is_seeded() {
        let a = build(&ModelConfig::mini()).unwrap();
        let b = build(&ModelConfig::mini()).unwrap();
        assert_eq!(a.params(), b.params());
        let c = build(&ModelConfig {
            init_seed: 1,
            ..ModelConfig::mini()
        })
        .unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn predict_shapes_and_purity() {
        let model = build(&ModelConfig::mini()).unwrap();
        let x = input(72, 3);
        let batch = vec![x.clone(), input(72, 4), x.clone(), input(72, 5)];
        let out = model.predict(&batch).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out[0], out[2]);
        assert_eq!(out, model.predict(&batch).unwrap());
        for s in &out {
            assert!((s.total - s.components.iter().sum::<f64>()).abs() < 1e-12);
        }
        assert!(matches!(
            model.predict(&[input(64, 1)]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn head_width_per_backbone() {
        let mini = build(&ModelConfig::mini()).unwrap();
        assert_eq!(mini.head_input_width(), 64);
        let layout = layout_of(&ModelConfig::pretrained_b1("unused"));
        assert_eq!(layout.find("head.weight").unwrap().shape, vec![5, 1280]);
        assert_eq!(layout.find("features.8.0.weight").unwrap().shape, vec![1280, 320, 1, 1]);
    }

    #[test]
    fn b1_requires_weights() {
        let err = build(&ModelConfig::pretrained_b1("/nonexistent/efficientnet_b1.safetensors")).unwrap_err();
        assert!(matches!(err, Error::MissingWeights { .. }));
        assert!(err.to_string().contains("efficientnet_b1"));
    }

    #[test]
    fn b1_layout_matches_torchvision_counts() {
        let layout = layout_of(&ModelConfig::pretrained_b1("unused"));
        // 7,794,184 parameters in torchvision efficientnet_b1, of which the
        // 1000-way classifier holds 1,281,000; ours has a 5-way head instead.
        assert_eq!(layout.trainable_count(), 7_794_184 - 1_281_000 + 1280 * 5 + 5);
        assert_eq!(b1::stage_repeats().iter().sum::<usize>(), 23);
    }

    #[test]
    fn scores_vector_clamping() {
        let s = ScoreVector::from_components([25.0, -3.0, 10.0, 10.0, 70.0]);
        assert_eq!(s.total, 112.0);
        assert_eq!(s.clamped_total, 100.0);
        assert_eq!(s.clamped_rubric().originality, 20.0);
        assert_eq!(s.clamped_rubric().color, 0.0);
    }
}
