use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use paintscore::dataset::{self, synthetic, DatasetManifest, LoadOptions, Split};
use paintscore::evaluation::{self, tables, EvaluationReport};
use paintscore::model::build;
use paintscore::model::checkpoint;
use paintscore::preprocess;
use paintscore::rubric::{self, Component, SchemeName};
use paintscore::training::{TrainOutputs, Trainer};
use paintscore_service::ServiceConfig;

use crate::config::TrainConfig;
use crate::{Cli, Command};

/// What a successful command reports.
#[derive(Debug, Default)]
pub struct CommandResult {
    pub artifacts_written: Vec<PathBuf>,
    pub summary: String,
}

/// 1 for bad input, 2 for failures while doing the work.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<paintscore::Error>() {
            use paintscore::Error::*;
            return match e {
                Validation(_)
                | Manifest(_)
                | ShapeMismatch { .. }
                | MissingWeights { .. }
                | Json(_)
                | Yaml(_)
                | Csv(_) => 1,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<paintscore_service::ServiceError>() {
            return match e {
                paintscore_service::ServiceError::Core(paintscore::Error::Manifest(_)) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    paintscore::Error::Validation(msg.into()).into()
}

pub fn run(cli: &Cli) -> Result<CommandResult> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest {
            manifest,
            images,
            out,
            min_artist_side,
        } => ingest(
            manifest,
            images.as_deref(),
            &out.clone().unwrap_or(g.out_dir.join("manifest.json")),
            *min_artist_side,
        ),
        Command::Synth {
            count,
            side,
            child_fraction,
        } => synth(*count, *side, *child_fraction, g.seed.unwrap_or(0), &g.out_dir),
        Command::Split { manifest, every, out } => split(manifest, *every, out.as_deref().unwrap_or(manifest)),
        Command::Train { config, resume } => train(config, resume.as_deref(), g.seed, &g.out_dir),
        Command::Evaluate {
            checkpoint,
            manifest,
            images,
            split,
        } => evaluate(checkpoint, manifest, images.as_deref(), split, &g.out_dir),
        Command::Score {
            checkpoint,
            image,
            json,
        } => score(checkpoint, image, *json),
        Command::Report { tables, evaluation } => report(*tables, evaluation.as_deref()),
        Command::Serve {
            manifest,
            images,
            ledger,
            checkpoints,
            report,
            addr,
        } => {
            let config = ServiceConfig {
                manifest: manifest.clone(),
                images_dir: images.clone(),
                ledger: ledger.clone().unwrap_or(g.out_dir.join("ledger.jsonl")),
                checkpoints_dir: checkpoints.clone().unwrap_or(g.out_dir.join("checkpoints")),
                report: Some(report.clone().unwrap_or(g.out_dir.join("report.json"))),
            };
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(paintscore_service::serve(&config, addr))?;
            Ok(CommandResult {
                summary: "service stopped".into(),
                ..Default::default()
            })
        }
    }
}

/// Path of `target` as written into a manifest stored in `manifest_dir`:
/// relative when it lies below that directory, absolute otherwise.
fn manifest_relative(target: &Path, manifest_dir: &Path) -> PathBuf {
    let abs = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let (t, d) = (abs(target), abs(manifest_dir));
    t.strip_prefix(&d).map(Path::to_path_buf).unwrap_or(t)
}

fn write_manifest(m: &DatasetManifest, path: &Path) -> Result<()> {
    m.save(path)?;
    Ok(())
}

fn ingest(manifest: &Path, images: Option<&Path>, out: &Path, min_artist_side: u32) -> Result<CommandResult> {
    let opts = LoadOptions {
        images_dir: images.map(Path::to_path_buf),
        min_artist_side,
        skip_image_check: false,
    };
    let loaded = dataset::load_manifest_with(manifest, &opts)?;
    for w in &loaded.warnings {
        log::warn!("[{}] {}", w.id, w.message);
    }
    let mut m = loaded.manifest;
    let base = images
        .map(Path::to_path_buf)
        .or_else(|| manifest.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let out_dir = out
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(out_dir)?;
    for r in &mut m.records {
        r.image_path = manifest_relative(&dataset::resolve_image(&base, &r.image_path), out_dir);
    }
    if m.provenance.is_empty() {
        m.provenance = format!("ingested from {}", manifest.display());
    }
    write_manifest(&m, out)?;
    let summary = dataset::summarize(&m)?;
    Ok(CommandResult {
        artifacts_written: vec![out.to_path_buf()],
        summary: format!(
            "{} records valid ({} warnings)\n{}",
            m.len(),
            loaded.warnings.len(),
            summary.to_table().trim_end()
        ),
    })
}

fn synth(count: usize, side: u32, child_fraction: f64, seed: u64, out_dir: &Path) -> Result<CommandResult> {
    let spec = synthetic::SyntheticSpec {
        count,
        image_side: side,
        seed,
        child_fraction,
    };
    let m = synthetic::generate(&spec, out_dir)?;
    let summary = dataset::summarize(&m)?;
    Ok(CommandResult {
        artifacts_written: vec![out_dir.join(synthetic::MANIFEST_FILE), out_dir.join("images")],
        summary: format!(
            "generated {} synthetic paintings\n{}",
            m.len(),
            summary.to_table().trim_end()
        ),
    })
}

fn split(manifest: &Path, every: usize, out: &Path) -> Result<CommandResult> {
    let mut m = dataset::load_manifest(manifest)?;
    let s = dataset::split_every_kth(&mut m, every)?;
    if out != manifest {
        let from = manifest.parent().unwrap_or(Path::new(""));
        let to = out
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        std::fs::create_dir_all(to)?;
        for r in &mut m.records {
            r.image_path = manifest_relative(&dataset::resolve_image(from, &r.image_path), to);
        }
    }
    write_manifest(&m, out)?;
    let by_source = |counts: &std::collections::BTreeMap<dataset::Source, usize>| {
        counts
            .iter()
            .map(|(s, n)| format!("{n} {}", format!("{s:?}").to_lowercase()))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut summary = format!(
        "{} train / {} test\n  train: {}\n  test: {}",
        s.train.len(),
        s.test.len(),
        by_source(&s.train_by_source),
        by_source(&s.test_by_source)
    );
    for w in &s.warnings {
        summary.push_str(&format!("\n  warning: {w}"));
    }
    Ok(CommandResult {
        artifacts_written: vec![out.to_path_buf()],
        summary,
    })
}

fn train(config_path: &Path, resume: Option<&Path>, seed: Option<u64>, out_dir: &Path) -> Result<CommandResult> {
    let cfg = TrainConfig::load(config_path)?;
    let mut hyper = cfg.hyperparams.clone();
    if let Some(s) = seed {
        hyper.seed = s;
    }
    let model_cfg = cfg.model_config(hyper.seed)?;
    let pp = cfg.preprocess_config(&model_cfg, hyper.seed);

    let opts = LoadOptions {
        images_dir: cfg.images_dir.clone(),
        ..LoadOptions::default()
    };
    let mut manifest = dataset::load_manifest_with(&cfg.manifest, &opts)?.manifest;
    if manifest.records.iter().all(|r| r.split == Split::Unassigned) {
        log::info!(
            "manifest has no split; assigning every {}th painting to test",
            cfg.split_every
        );
        dataset::split_every_kth(&mut manifest, cfg.split_every)?;
    }
    let base = cfg
        .images_dir
        .clone()
        .or_else(|| cfg.manifest.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let train_set = dataset::load_samples(&manifest, &base, &pp, Some(Split::Train))?;
    let test_set = dataset::load_samples(&manifest, &base, &pp, Some(Split::Test))?;
    if train_set.is_empty() {
        bail!(invalid("no training records in the manifest"));
    }

    let resume = resume.map(Path::to_path_buf).or(cfg.resume.clone());
    let mut trainer = match &resume {
        Some(path) => {
            let ckpt = checkpoint::load_expecting(path, &model_cfg)?;
            log::info!(
                "resuming from {} after epoch {}",
                path.display(),
                ckpt.meta.training_meta.epochs_completed
            );
            Trainer::resume_from(ckpt, hyper.clone(), pp)?
        }
        None => Trainer::new(build(&model_cfg)?, hyper.clone(), pp)?,
    };
    let outputs = TrainOutputs {
        checkpoint_dir: Some(out_dir.join("checkpoints")),
        log_path: Some(out_dir.join("train_log.jsonl")),
    };
    std::fs::create_dir_all(out_dir)?;
    let first_epoch = trainer.epochs_completed() + 1;
    let (meta, log) = trainer.train(&train_set, &test_set, &outputs)?;
    let mut artifacts: Vec<PathBuf> = log.epochs.iter().filter_map(|e| e.checkpoint.clone()).collect();
    artifacts.push(outputs.log_path.clone().unwrap());
    Ok(CommandResult {
        artifacts_written: artifacts,
        summary: format!(
            "trained epochs {first_epoch}..={} on {} paintings ({} held out); final train loss {:.4}",
            meta.training_meta.epochs_completed,
            train_set.len(),
            test_set.len(),
            meta.training_meta.final_loss.unwrap_or(f64::NAN)
        ),
    })
}

fn evaluate(
    ckpt_path: &Path,
    manifest: &Path,
    images: Option<&Path>,
    split: &str,
    out_dir: &Path,
) -> Result<CommandResult> {
    let split = match split {
        "test" => Some(Split::Test),
        "train" => Some(Split::Train),
        "all" => None,
        other => bail!(invalid(format!("--split must be test, train or all, got {other:?}"))),
    };
    let ckpt = checkpoint::load(ckpt_path)?;
    let pp = ckpt.meta.preprocess_or_default();
    let opts = LoadOptions {
        images_dir: images.map(Path::to_path_buf),
        ..LoadOptions::default()
    };
    let m = dataset::load_manifest_with(manifest, &opts)?.manifest;
    let base = images
        .map(Path::to_path_buf)
        .or_else(|| manifest.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let samples = dataset::load_samples(&m, &base, &pp, split)?;
    if samples.is_empty() {
        bail!(invalid(
            "no records in the selected split; run `paintscore split` first"
        ));
    }
    let report = evaluation::evaluate(&ckpt.model, &samples, &pp)?;
    let files = evaluation::write_report(&report, out_dir)?;
    let accs: Vec<String> = report
        .per_scheme
        .iter()
        .map(|(s, r)| format!("{s} {:.2}%", r.accuracy_percent))
        .collect();
    Ok(CommandResult {
        artifacts_written: vec![files.json, files.markdown, files.scatter_png],
        summary: format!(
            "N = {}: r = {:.3} [{:.3}, {:.3}], R² = {:.3}, MAPE = {:.2}%\naccuracy: {}; average {:.2}%",
            report.n,
            report.pearson_r,
            report.ci95.0,
            report.ci95.1,
            report.r_squared,
            report.mape_percent,
            accs.join(", "),
            report.average_accuracy_percent
        ),
    })
}

fn score(ckpt_path: &Path, image: &Path, json: bool) -> Result<CommandResult> {
    let ckpt = checkpoint::load(ckpt_path)?;
    let pp = ckpt.meta.preprocess_or_default();
    let img = preprocess::load_rgb(image)?;
    let s = ckpt.model.predict_one(&preprocess::prepare(&img, &pp, None)?)?;
    let summary = if json {
        serde_json::to_string_pretty(&s)?
    } else {
        let mut out = String::new();
        for (c, v) in Component::ALL.iter().zip(s.components) {
            let band = rubric::band_of(v.clamp(0.0, rubric::COMPONENT_MAX))?;
            out.push_str(&format!("{:<12} {v:>7.2}  {band:?}\n", c.name()));
        }
        out.push_str(&format!("{:<12} {:>7.2}", "total", s.total));
        for name in SchemeName::ALL {
            out.push_str(&format!("  {name}: {}", name.scheme().bin(s.clamped_total)?));
        }
        out
    };
    Ok(CommandResult {
        artifacts_written: vec![],
        summary,
    })
}

fn report(tables_flag: bool, evaluation: Option<&Path>) -> Result<CommandResult> {
    if !tables_flag && evaluation.is_none() {
        bail!(invalid("nothing to report: pass --tables and/or --evaluation PATH"));
    }
    let mut out = String::new();
    if tables_flag {
        out.push_str(&tables::replay(&tables::reference_set())?.to_text());
    }
    if let Some(p) = evaluation {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        out.push_str(&EvaluationReport::from_json(&text)?.to_markdown());
    }
    Ok(CommandResult {
        artifacts_written: vec![],
        summary: out.trim_end().to_string(),
    })
}
