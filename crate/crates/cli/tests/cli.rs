use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn paintscore(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paintscore"))
        .current_dir(dir)
        .args(["--log-level", "warn"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn failed_with(out: &Output, code: i32) -> String {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_png(path: &Path, side: u32) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    image::RgbImage::from_pixel(side, side, image::Rgb([120, 30, 200]))
        .save(path)
        .unwrap();
}

const HEADER: &str = "id,image_path,source,originality,color,texture,composition,content,rater_id,timestamp\n";

#[test]
fn help_and_bad_flags() {
    let tmp = TempDir::new().unwrap();
    let help = ok(&paintscore(tmp.path(), &["--help"]));
    for cmd in [
        "ingest", "synth", "split", "train", "evaluate", "score", "report", "serve",
    ] {
        assert!(help.contains(cmd), "help lists {cmd}");
    }
    failed_with(&paintscore(tmp.path(), &["synth", "--no-such-flag"]), 1);
    failed_with(&paintscore(tmp.path(), &["report"]), 1);
}

#[test]
fn ingest_writes_canonical_manifest_and_rejects_bad_rows() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_png(&d.join("imgs/a.png"), 64);
    write_png(&d.join("imgs/b.png"), 700);
    std::fs::write(
        d.join("ratings.csv"),
        format!(
            "{HEADER}a,a.png,child,4,5,6,7,8,r1,2024-01-01T00:00:00Z\n\
             b,b.png,artist,18,19,17,16,20,r1,2024-01-01T00:00:00Z\n"
        ),
    )
    .unwrap();
    let out = ok(&paintscore(
        d,
        &[
            "ingest",
            "--manifest",
            "ratings.csv",
            "--images",
            "imgs",
            "--out",
            "clean/manifest.json",
        ],
    ));
    assert!(out.contains("2 records valid"), "{out}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("clean/manifest.json")).unwrap()).unwrap();
    let records = json["records"].as_array().unwrap();
    assert_eq!(records[0]["id"], "a");
    assert_eq!(records[0]["consensus_total"], 30.0);
    // The written manifest must load again from its own directory.
    ok(&paintscore(
        d,
        &["split", "--manifest", "clean/manifest.json", "--every", "2"],
    ));

    std::fs::write(
        d.join("missing.csv"),
        format!("{HEADER}ghost,ghost.png,child,1,1,1,1,1,r1,\n"),
    )
    .unwrap();
    let err = failed_with(
        &paintscore(d, &["ingest", "--manifest", "missing.csv", "--images", "imgs"]),
        1,
    );
    assert!(err.contains("ghost"), "{err}");

    std::fs::write(
        d.join("dup.csv"),
        format!("{HEADER}a,a.png,child,1,1,1,1,1,r1,\na,b.png,child,1,1,1,1,1,r2,\n"),
    )
    .unwrap();
    let err = failed_with(
        &paintscore(d, &["ingest", "--manifest", "dup.csv", "--images", "imgs"]),
        1,
    );
    assert!(err.contains("duplicate id"), "{err}");

    // Artists below the minimum side are rejected.
    std::fs::write(d.join("small.csv"), format!("{HEADER}s1,a.png,artist,1,1,1,1,1,r1,\n")).unwrap();
    let err = failed_with(
        &paintscore(d, &["ingest", "--manifest", "small.csv", "--images", "imgs"]),
        1,
    );
    assert!(err.contains("[s1]") && err.contains("minimum"), "{err}");
}

#[test]
fn split_is_idempotent_and_rejects_k1() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&paintscore(
        d,
        &[
            "--seed",
            "5",
            "--out-dir",
            "data",
            "synth",
            "--count",
            "30",
            "--side",
            "32",
        ],
    ));
    let out = ok(&paintscore(
        d,
        &["split", "--manifest", "data/manifest.json", "--every", "5"],
    ));
    assert!(out.starts_with("24 train / 6 test"), "{out}");
    let first = std::fs::read(d.join("data/manifest.json")).unwrap();
    ok(&paintscore(
        d,
        &["split", "--manifest", "data/manifest.json", "--every", "5"],
    ));
    assert_eq!(first, std::fs::read(d.join("data/manifest.json")).unwrap());
    failed_with(
        &paintscore(d, &["split", "--manifest", "data/manifest.json", "--every", "1"]),
        1,
    );
}

#[test]
fn synth_train_resume_evaluate_score() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&paintscore(
        d,
        &[
            "--seed",
            "1",
            "--out-dir",
            "data",
            "synth",
            "--count",
            "20",
            "--side",
            "48",
        ],
    ));
    ok(&paintscore(
        d,
        &["split", "--manifest", "data/manifest.json", "--every", "5"],
    ));
    std::fs::write(
        d.join("train.yaml"),
        "manifest: data/manifest.json\n\
         model: {backbone: mini, input_side: 48}\n\
         hyperparams: {max_epochs: 1, batch_size: 5}\n",
    )
    .unwrap();
    let out = ok(&paintscore(d, &["--out-dir", "run", "train", "--config", "train.yaml"]));
    assert!(out.contains("epochs 1..=1"), "{out}");
    let ckpt = d.join("run/checkpoints/final.safetensors");
    assert!(ckpt.exists() && d.join("run/checkpoints/final.safetensors.json").exists());
    assert!(d.join("run/train_log.jsonl").exists());

    // Same run expressed as JSON, resumed for one more epoch.
    std::fs::write(
        d.join("more.json"),
        r#"{"manifest": "data/manifest.json", "model": {"backbone": "mini", "input_side": 48},
            "hyperparams": {"max_epochs": 2, "batch_size": 5}}"#,
    )
    .unwrap();
    let out = ok(&paintscore(
        d,
        &[
            "--out-dir",
            "run",
            "train",
            "--config",
            "more.json",
            "--resume",
            "run/checkpoints/final.safetensors",
        ],
    ));
    assert!(out.contains("epochs 2..=2"), "{out}");

    let out = ok(&paintscore(
        d,
        &[
            "--out-dir",
            "run",
            "evaluate",
            "--checkpoint",
            "run/checkpoints/final.safetensors",
            "--manifest",
            "data/manifest.json",
        ],
    ));
    assert!(out.starts_with("N = 4"), "{out}");
    for f in ["report.json", "report.md", "scatter.png"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let md = ok(&paintscore(d, &["report", "--evaluation", "run/report.json"]));
    assert!(md.contains("M1"), "{md}");

    let json = ok(&paintscore(
        d,
        &[
            "score",
            "--checkpoint",
            "run/checkpoints/final.safetensors",
            "--image",
            "data/images/syn-0000.png",
            "--json",
        ],
    ));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["components"].as_array().unwrap().len(), 5);

    // Unknown hyperparameter keys are a config error, not silently ignored.
    std::fs::write(
        d.join("typo.yaml"),
        "manifest: data/manifest.json\nmodel: {backbone: mini}\nhyperparams: {epochs: 2}\n",
    )
    .unwrap();
    failed_with(&paintscore(d, &["train", "--config", "typo.yaml"]), 1);
    std::fs::write(
        d.join("nan.yaml"),
        "manifest: data/manifest.json\nmodel: {backbone: mini, input_side: 48}\nhyperparams: {max_epochs: 1, learning_rate: 1.0e30}\n",
    )
    .unwrap();
    let err = failed_with(
        &paintscore(d, &["--out-dir", "nan", "train", "--config", "nan.yaml"]),
        2,
    );
    assert!(err.contains("non-finite"), "{err}");
}

#[test]
fn report_tables_flags_discrepancies() {
    let tmp = TempDir::new().unwrap();
    let out = ok(&paintscore(tmp.path(), &["report", "--tables"]));
    assert!(out.contains("recomputed 90.83% differs from stated 91.67%"), "{out}");
    assert!(out.contains("sum to 119"), "{out}");
}
