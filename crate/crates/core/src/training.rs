//! Mini-batch gradient descent on the mean-square error over the five
//! component outputs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use image::RgbImage;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::checkpoint::{self, CheckpointMeta, TrainingMeta, FORMAT_VERSION};
use crate::model::nn::{Tape, Tensor};
use crate::model::{Checkpoint, Model, HEAD_OUTPUTS};
use crate::preprocess::{self, PreprocessConfig};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Evaluate test loss every this many epochs; 0 disables.
    pub eval_every: usize,
    /// Write a checkpoint every this many epochs; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            batch_size: 10,
            learning_rate: 0.0005,
            max_epochs: 200,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            eval_every: 0,
            checkpoint_every: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::validation(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::validation("max_epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Mean over all `N×5` squared differences.
pub fn mse_loss(pred: &[[f64; 5]], target: &[[f64; 5]]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}×5", target.len()),
            actual: format!("{}×5", pred.len()),
        });
    }
    if pred.is_empty() {
        return Err(Error::validation("mse_loss of an empty batch"));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .flat_map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).powi(2)))
        .sum();
    Ok(sum / (pred.len() * HEAD_OUTPUTS) as f64)
}

/// Adam (β₁ 0.9, β₂ 0.999, ε 1e-8) or plain SGD over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    first: Vec<f32>,
    second: Vec<f32>,
    steps: i32,
}

impl Optimizer {
    const BETA1: f32 = 0.9;
    const BETA2: f32 = 0.999;
    const EPS: f32 = 1e-8;

    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        let state = if kind == OptimizerKind::Adam { len } else { 0 };
        Optimizer {
            kind,
            first: vec![0.0; state],
            second: vec![0.0; state],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32], mask: &[bool], lr: f32) {
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for ((p, g), &m) in params.iter_mut().zip(grads).zip(mask) {
                    if m {
                        *p -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let c1 = 1.0 - Self::BETA1.powi(self.steps);
                let c2 = 1.0 - Self::BETA2.powi(self.steps);
                for i in 0..params.len() {
                    if !mask[i] {
                        continue;
                    }
                    let g = grads[i];
                    self.first[i] = Self::BETA1 * self.first[i] + (1.0 - Self::BETA1) * g;
                    self.second[i] = Self::BETA2 * self.second[i] + (1.0 - Self::BETA2) * g * g;
                    let m = self.first[i] / c1;
                    let v = self.second[i] / c2;
                    params[i] -= lr * m / (v.sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// One training item: a standardized (cropped and resized, not yet
/// augmented) image and its five component targets.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: RgbImage,
    pub target: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub wall_clock_secs: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn total_steps(&self) -> usize {
        self.epochs.iter().map(|e| e.steps).sum()
    }

    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_json_lines(text: &str) -> Result<Self> {
        let epochs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(TrainingLog { epochs })
    }
}

/// Where `train` writes artifacts. Everything is optional.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub checkpoint_dir: Option<PathBuf>,
    /// Appended to one JSON line per epoch as epochs complete.
    pub log_path: Option<PathBuf>,
}

/// Owns a model and its optimizer state for the duration of training.
pub struct Trainer {
    model: Model,
    optimizer: Optimizer,
    hyper: Hyperparams,
    preprocess: PreprocessConfig,
    mask: Vec<bool>,
    epochs_done: usize,
}

impl Trainer {
    pub fn new(model: Model, hyper: Hyperparams, preprocess: PreprocessConfig) -> Result<Self> {
        hyper.validate()?;
        preprocess.validate()?;
        if preprocess.target_side as usize != model.config().input_side {
            return Err(Error::validation(format!(
                "preprocess target_side {} differs from model input_side {}",
                preprocess.target_side,
                model.config().input_side
            )));
        }
        let mask = model.trainable_mask();
        let optimizer = Optimizer::new(hyper.optimizer, model.params().len());
        Ok(Trainer {
            model,
            optimizer,
            hyper,
            preprocess,
            mask,
            epochs_done: 0,
        })
    }

    /// Continues epoch numbering after a resumed checkpoint.
    pub fn resume_from(ckpt: Checkpoint, hyper: Hyperparams, preprocess: PreprocessConfig) -> Result<Self> {
        let mut t = Trainer::new(ckpt.model, hyper, preprocess)?;
        t.epochs_done = ckpt.meta.training_meta.epochs_completed;
        Ok(t)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_done
    }

    /// One parameter update on `batch`; returns the loss before the update.
    pub fn training_step(&mut self, batch: &[(Tensor, [f64; 5])]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::validation("empty batch"));
        }
        let scale = 2.0 / (batch.len() * HEAD_OUTPUTS) as f64;
        let mut grads = vec![0.0f32; self.model.params().len()];
        let mut preds = Vec::with_capacity(batch.len());
        for (x, target) in batch {
            self.model.check_input(x)?;
            let mut tape = Tape::new();
            let out = self.model.forward(x, Some(&mut tape));
            let mut g = [0.0f32; 5];
            for k in 0..HEAD_OUTPUTS {
                g[k] = ((out[k] as f64 - target[k]) * scale) as f32;
            }
            self.model.backward(g, &mut tape, &mut grads);
            preds.push(out.map(f64::from));
        }
        let targets: Vec<[f64; 5]> = batch.iter().map(|(_, t)| *t).collect();
        let loss = mse_loss(&preds, &targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                loss,
                epoch: self.epochs_done + 1,
                batch: 0,
                learning_rate: self.hyper.learning_rate,
            });
        }
        let lr = self.hyper.learning_rate as f32;
        self.optimizer.step(self.model.params_mut(), &grads, &self.mask, lr);
        Ok(loss)
    }

    /// Batch order for an epoch (0-based) under the configured seed.
    pub fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        shuffled_order(self.hyper.seed, n, epoch)
    }

    fn assemble(&self, samples: &[Sample], idx: &[usize], epoch: usize) -> Vec<(Tensor, [f64; 5])> {
        idx.iter()
            .map(|&i| {
                let s = &samples[i];
                let key = preprocess::item_seed(&s.id, epoch as u64);
                let img = preprocess::augment(&s.image, &self.preprocess, key);
                (preprocess::to_model_input(&img, &self.preprocess), s.target)
            })
            .collect()
    }

    /// Runs one full pass; returns (mean batch loss, steps taken).
    pub fn run_epoch(&mut self, samples: &[Sample]) -> Result<(f64, usize)> {
        if samples.is_empty() {
            return Err(Error::validation("training set is empty"));
        }
        let epoch = self.epochs_done;
        let order = self.epoch_order(samples.len(), epoch);
        let mut weighted = 0.0;
        let mut steps = 0;
        for (b, chunk) in order.chunks(self.hyper.batch_size).enumerate() {
            let batch = self.assemble(samples, chunk, epoch);
            let loss = self.training_step(&batch).map_err(|e| match e {
                Error::NonFiniteLoss {
                    loss,
                    epoch,
                    learning_rate,
                    ..
                } => Error::NonFiniteLoss {
                    loss,
                    epoch,
                    batch: b,
                    learning_rate,
                },
                other => other,
            })?;
            weighted += loss * chunk.len() as f64;
            steps += 1;
        }
        self.epochs_done += 1;
        Ok((weighted / samples.len() as f64, steps))
    }

    /// Test-set MSE without augmentation (unless `augment_test`).
    pub fn evaluate_loss(&self, samples: &[Sample]) -> Result<f64> {
        let mut preds = Vec::with_capacity(samples.len());
        let mut targets = Vec::with_capacity(samples.len());
        for s in samples {
            let img = if self.preprocess.augment_test {
                preprocess::augment(&s.image, &self.preprocess, preprocess::item_seed(&s.id, 0))
            } else {
                s.image.clone()
            };
            let x = preprocess::to_model_input(&img, &self.preprocess);
            preds.push(self.model.forward(&x, None).map(f64::from));
            targets.push(s.target);
        }
        mse_loss(&preds, &targets)
    }

    pub fn checkpoint_meta(&self, final_loss: Option<f64>) -> CheckpointMeta {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            config: self.model.config().clone(),
            training_meta: TrainingMeta {
                epochs_completed: self.epochs_done,
                final_loss,
                seed: self.hyper.seed,
                created_at: Utc::now(),
            },
            preprocess: Some(self.preprocess.clone()),
        }
    }

    /// Trains until `max_epochs` total epochs have completed.
    pub fn train(
        &mut self,
        train_set: &[Sample],
        test_set: &[Sample],
        outputs: &TrainOutputs,
    ) -> Result<(CheckpointMeta, TrainingLog)> {
        if train_set.is_empty() {
            return Err(Error::validation("training set is empty"));
        }
        let mut log = TrainingLog::default();
        let mut last_loss = None;
        while self.epochs_done < self.hyper.max_epochs {
            let started = Instant::now();
            let (train_loss, steps) = self.run_epoch(train_set)?;
            last_loss = Some(train_loss);
            let epoch = self.epochs_done;
            let test_loss = if self.hyper.eval_every > 0 && epoch.is_multiple_of(self.hyper.eval_every) && !test_set.is_empty() {
                Some(self.evaluate_loss(test_set)?)
            } else {
                None
            };
            let periodic = self.hyper.checkpoint_every > 0 && epoch.is_multiple_of(self.hyper.checkpoint_every);
            let checkpoint = match &outputs.checkpoint_dir {
                Some(dir) if periodic && epoch < self.hyper.max_epochs => {
                    let path = dir.join(format!("epoch-{epoch:04}.safetensors"));
                    checkpoint::save(&self.model, &self.checkpoint_meta(last_loss), &path)?;
                    Some(path)
                }
                _ => None,
            };
            let entry = EpochLog {
                epoch,
                train_loss,
                test_loss,
                wall_clock_secs: started.elapsed().as_secs_f64(),
                learning_rate: self.hyper.learning_rate,
                steps,
                checkpoint,
            };
            log::info!("epoch {epoch}: train loss {train_loss:.4}");
            if let Some(path) = &outputs.log_path {
                append_line(path, &serde_json::to_string(&entry)?)?;
            }
            log.epochs.push(entry);
        }
        let meta = self.checkpoint_meta(last_loss);
        if let Some(dir) = &outputs.checkpoint_dir {
            let path = dir.join("final.safetensors");
            checkpoint::save(&self.model, &meta, &path)?;
            if let Some(last) = log.epochs.last_mut() {
                last.checkpoint = Some(path);
            }
        }
        Ok((meta, log))
    }
}

pub fn shuffled_order(seed: u64, n: usize, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng("shuffle", &[seed, epoch as u64]));
    order
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Convenience wrapper: trains `model` from scratch and returns the final
/// checkpoint with its log.
pub fn train(
    model: Model,
    train_set: &[Sample],
    hyper: &Hyperparams,
    preprocess: &PreprocessConfig,
    outputs: &TrainOutputs,
) -> Result<(Checkpoint, TrainingLog)> {
    let mut trainer = Trainer::new(model, hyper.clone(), preprocess.clone())?;
    let (meta, log) = trainer.train(train_set, &[], outputs)?;
    Ok((
        Checkpoint {
            model: trainer.into_model(),
            meta,
        },
        log,
    ))
}
