//! End-to-end CLI checks over a micro pipeline: generate, train, transfer,
//! evaluate, export. Everything runs the installed binary via its public
//! interface.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_restyle"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("restyle-cli-{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn style_spec() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/style_dialect.json")
}

fn write_micro_train_config(path: &Path) {
    std::fs::write(
        path,
        r#"{
            "tasks": ["n", "nbt"],
            "steps": 4,
            "tokens_per_batch": 128,
            "learning_rate": 0.001,
            "seed": 3,
            "model": { "d_model": 16, "num_layers": 1, "num_heads": 2,
                       "ffn_dim": 32, "vocab_size": 256, "max_seq_len": 24 },
            "log_every": 2
        }"#,
    )
    .unwrap();
}

/// Builds the micro corpus + checkpoint + exemplars once per test dir.
fn build_pipeline(dir: &Path) {
    let corpus = dir.join("corpus.jsonl");
    let status = bin()
        .args([
            "gen-corpus",
            "--config",
            style_spec(),
            "--out",
            corpus.to_str().unwrap(),
            "--num-docs",
            "60",
            "--seed",
            "5",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let train_config = dir.join("train.json");
    write_micro_train_config(&train_config);
    let status = bin()
        .args([
            "train",
            "--config",
            train_config.to_str().unwrap(),
            "--corpus",
            corpus.to_str().unwrap(),
            "--checkpoint",
            dir.join("model.ckpt").to_str().unwrap(),
            "--metrics",
            dir.join("metrics.ndjson").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    // Exemplars: first few targets of each class, via the corpus file.
    let text = std::fs::read_to_string(&corpus).unwrap();
    let mut us = Vec::new();
    let mut uk = Vec::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let target = v["target"].as_str().unwrap().to_string();
        match v["style_id"].as_str().unwrap() {
            "us" if us.len() < 4 => us.push(target),
            "uk" if uk.len() < 4 => uk.push(target),
            _ => {}
        }
    }
    let exemplars = serde_json::json!({
        "axis": "dialect",
        "classes": [
            {"name": "us", "sentences": us},
            {"name": "uk", "sentences": uk},
        ],
        "lambda": 2.0,
        "ranges": {"add": [0.1, 0.3], "delete": [0.1, 0.3]},
        "decode": {"mode": "greedy", "temperature": 1.0, "max_len": 24},
    });
    std::fs::write(dir.join("exemplars.json"), exemplars.to_string()).unwrap();

    std::fs::write(dir.join("inputs.txt"), "the truck waits near the old door .\n").unwrap();
}

#[test]
fn pipeline_runs_and_emits_records() {
    let dir = workdir("pipeline");
    build_pipeline(&dir);

    let metrics = std::fs::read_to_string(dir.join("metrics.ndjson")).unwrap();
    assert!(metrics.lines().count() >= 2, "metrics stream missing steps");
    for line in metrics.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["total_loss"].as_f64().unwrap().is_finite());
        assert!(v["task_losses"]["n"].is_number());
        assert!(v["task_losses"]["nbt"].is_number());
    }

    let out = dir.join("transfer.jsonl");
    let status = bin()
        .args([
            "transfer",
            "--checkpoint",
            dir.join("model.ckpt").to_str().unwrap(),
            "--exemplars",
            dir.join("exemplars.json").to_str().unwrap(),
            "--input",
            dir.join("inputs.txt").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "1",
            "--lambda",
            "3.0",
            "--add-range",
            "0.0:0.2",
            "--delete-range",
            "0.0:0.2",
            "--mode",
            "delta",
            "--decode",
            "greedy",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let line = std::fs::read_to_string(&out).unwrap();
    let record: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    for key in ["input", "output", "measured_add_rate", "measured_delete_rate", "style_norms"] {
        assert!(record.get(key).is_some(), "missing field {key}");
    }

    for sub in ["shorten", "augment"] {
        let out = dir.join(format!("{sub}.jsonl"));
        let mut args = vec![
            sub.to_string(),
            "--checkpoint".into(),
            dir.join("model.ckpt").to_str().unwrap().into(),
            "--input".into(),
            dir.join("inputs.txt").to_str().unwrap().into(),
            "--out".into(),
            out.to_str().unwrap().into(),
            "--seed".into(),
            "2".into(),
        ];
        if sub == "augment" {
            args.push("--sigma".into());
            args.push("0.05".into());
        }
        let status = bin().args(&args).status().unwrap();
        assert!(status.success(), "{sub} failed");
        assert!(out.is_file());
    }

    let status = bin()
        .args([
            "complete",
            "--checkpoint",
            dir.join("model.ckpt").to_str().unwrap(),
            "--exemplars",
            dir.join("exemplars.json").to_str().unwrap(),
            "--input",
            dir.join("inputs.txt").to_str().unwrap(),
            "--out",
            dir.join("complete.jsonl").to_str().unwrap(),
            "--seed",
            "2",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let status = bin()
        .args([
            "export-styles",
            "--checkpoint",
            dir.join("model.ckpt").to_str().unwrap(),
            "--input",
            dir.join("corpus.jsonl").to_str().unwrap(),
            "--out",
            dir.join("styles").to_str().unwrap(),
            "--limit",
            "20",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("styles.json")).unwrap()).unwrap();
    let rows = meta["rows"].as_u64().unwrap();
    let cols = meta["cols"].as_u64().unwrap();
    assert_eq!(rows, 20);
    assert_eq!(cols, 16);
    let bin_len = std::fs::metadata(dir.join("styles.bin")).unwrap().len();
    assert_eq!(bin_len, rows * cols * 8);
}

#[test]
fn eval_is_byte_identical_across_runs() {
    let dir = workdir("eval");
    build_pipeline(&dir);
    for name in ["report_a.json", "report_b.json"] {
        let status = bin()
            .args([
                "eval",
                "--checkpoint",
                dir.join("model.ckpt").to_str().unwrap(),
                "--exemplars",
                dir.join("exemplars.json").to_str().unwrap(),
                "--input",
                dir.join("corpus.jsonl").to_str().unwrap(),
                "--spec",
                style_spec(),
                "--out",
                dir.join(name).to_str().unwrap(),
                "--seed",
                "7",
                "--limit",
                "20",
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir.join("report_a.json")).unwrap();
    let b = std::fs::read(dir.join("report_b.json")).unwrap();
    assert_eq!(a, b, "same seed and inputs must give byte-identical reports");
}

#[test]
fn missing_checkpoint_fails_without_partial_output() {
    let dir = workdir("missing");
    std::fs::write(dir.join("inputs.txt"), "hello world .\n").unwrap();
    std::fs::write(
        dir.join("exemplars.json"),
        r#"{"classes":[{"name":"a","sentences":["x"]},{"name":"b","sentences":["y"]}],
            "lambda":1.0,"ranges":{"add":[0.1,0.3],"delete":[0.1,0.3]}}"#,
    )
    .unwrap();
    let out = dir.join("out.jsonl");
    let output = bin()
        .args([
            "transfer",
            "--checkpoint",
            dir.join("nope.ckpt").to_str().unwrap(),
            "--exemplars",
            dir.join("exemplars.json").to_str().unwrap(),
            "--input",
            dir.join("inputs.txt").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "1",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert_eq!(output.status.code(), Some(3), "missing file exit code");
    assert!(!out.exists(), "no partial output may be written");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("checkpoint not found"), "stderr: {stderr}");
}

#[test]
fn invalid_config_gets_a_distinct_code() {
    let dir = workdir("badconfig");
    std::fs::write(dir.join("spec.json"), "{ not json").unwrap();
    let output = bin()
        .args([
            "gen-corpus",
            "--config",
            dir.join("spec.json").to_str().unwrap(),
            "--out",
            dir.join("c.jsonl").to_str().unwrap(),
            "--seed",
            "1",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert_eq!(output.status.code(), Some(4), "invalid config exit code");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let output = bin().args(["train", "--definitely-not-a-flag"]).output().unwrap();
    assert!(!output.status.success());
    assert_eq!(output.status.code(), Some(2), "clap usage error code");
}

#[test]
fn gen_corpus_inputs_are_not_mutated() {
    let dir = workdir("immutability");
    build_pipeline(&dir);
    let spec_before = std::fs::read(style_spec()).unwrap();
    let corpus_before = std::fs::read(dir.join("corpus.jsonl")).unwrap();
    // Run eval (reads corpus + spec) and confirm bytes are untouched.
    let status = bin()
        .args([
            "eval",
            "--checkpoint",
            dir.join("model.ckpt").to_str().unwrap(),
            "--exemplars",
            dir.join("exemplars.json").to_str().unwrap(),
            "--input",
            dir.join("corpus.jsonl").to_str().unwrap(),
            "--spec",
            style_spec(),
            "--out",
            dir.join("r.json").to_str().unwrap(),
            "--seed",
            "1",
            "--limit",
            "10",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read(style_spec()).unwrap(), spec_before);
    assert_eq!(std::fs::read(dir.join("corpus.jsonl")).unwrap(), corpus_before);
}
