use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ragner::commands::cmd_synth;
use ragner::synth::Domain;

fn ragner(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ragner")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ragner(args);
    assert!(
        out.status.success(),
        "ragner {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON error");
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn music(dir: &Path) -> PathBuf {
    cmd_synth(dir, &[Domain::Music], 0, 32).unwrap();
    dir.join("music/ragner.toml")
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn chain_is_deterministic_and_scores_gold_at_100() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = music(dir.path());
    let c = cfg.to_str().unwrap();
    let root = dir.path().join("music");

    ok(&["ingest", "-c", c]);
    ok(&["index", "-c", c]);
    let predict = ok(&["predict", "-c", c]);
    let summary: serde_json::Value = serde_json::from_str(predict.trim()).unwrap();
    assert_eq!(summary["predictions"], 456);
    let table = ok(&["evaluate", "-c", c]);
    assert!(table.lines().any(|l| l.starts_with("micro") && l.trim_end().ends_with("100.00")), "{table}");

    let report: serde_json::Value = serde_json::from_slice(&read(root.join("out/report.json"))).unwrap();
    for key in ["micro", "per_type", "config_fingerprint", "seeds", "template_id", "model_name"] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    assert_eq!(report["template_id"], "ragner-default-v1");

    let first: Vec<Vec<u8>> = ["work/index/words.rnix", "work/manifests/index.json", "out/predictions.jsonl", "out/report.json"]
        .iter()
        .map(|p| read(root.join(p)))
        .collect();
    assert_eq!(read(root.join("out/predictions.jsonl")).iter().filter(|&&b| b == b'\n').count(), 456);

    std::fs::remove_dir_all(root.join("work")).unwrap();
    std::fs::remove_dir_all(root.join("out")).unwrap();
    for cmd in ["ingest", "index", "predict", "evaluate"] {
        ok(&[cmd, "-c", c]);
    }
    let second: Vec<Vec<u8>> = ["work/index/words.rnix", "work/manifests/index.json", "out/predictions.jsonl", "out/report.json"]
        .iter()
        .map(|p| read(root.join(p)))
        .collect();
    assert!(first == second, "rerun changed an artifact");
}

#[test]
fn downstream_commands_verify_upstream_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = music(dir.path());
    let c = cfg.to_str().unwrap();

    let out = ragner(&["index", "-c", c]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "missing-artifact");

    ok(&["ingest", "-c", c]);
    let train = dir.path().join("music/work/corpus/train.jsonl");
    let mut text = std::fs::read_to_string(&train).unwrap();
    text.push('\n');
    std::fs::write(&train, text).unwrap();
    let out = ragner(&["index", "-c", c]);
    assert_eq!(error_kind(&out), "stale-artifact");
}

#[test]
fn config_errors_exit_2_with_json() {
    let out = ragner(&["ingest", "-c", "/definitely/not/here.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config-error");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[paths]\ncorpus_dir = 3\n").unwrap();
    let out = ragner(&["ingest", "-c", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config-error");
}

#[test]
fn retrieve_emits_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = music(dir.path());
    let c = cfg.to_str().unwrap();
    ok(&["ingest", "-c", c]);
    ok(&["index", "-c", c, "--train-only"]);
    let out = ok(&["retrieve", "-c", c, "--k", "3", "--text", "Nina Simone played cello at Woodstock", "--text", "the of and"]);
    let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["query_text"], "Nina Simone played cello at Woodstock");
    assert_eq!(lines[0]["examples"].as_array().unwrap().len(), 3);
    let ex = &lines[0]["examples"][0];
    assert!(ex["sentence_id"].is_u64() && ex["score"].is_f64() && ex["matched_pairs"].is_array());
    assert!(lines[1]["error"].as_str().unwrap().contains("stop-word"));
}

#[test]
fn augment_and_ablate_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(dir.path(), &[Domain::Conll2003], 0, 32).unwrap();
    let cfg = dir.path().join("conll2003/ragner.toml");
    let c = cfg.to_str().unwrap();
    ok(&["ingest", "-c", c]);
    let out: serde_json::Value = serde_json::from_str(ok(&["augment", "-c", c]).trim()).unwrap();
    let n = out["finetune_sentences"].as_u64().unwrap();
    assert_eq!(n, 14987 - 500);
    let records = out["records"].as_u64().unwrap();
    assert!((records as f64 - n as f64 * 1.3).abs() <= 1.0, "{records}");

    let grid = dir.path().join("grid.toml");
    std::fs::write(
        &grid,
        "[grid]\nname = \"modes\"\nlayout = \"single\"\nmodes = [\"word-level\", \"sentence-level\"]\n",
    )
    .unwrap();
    let table = ok(&["ablate", "-c", c, "--grid", grid.to_str().unwrap(), "--backend", "mock-echo-nearest"]);
    assert!(table.contains("word-level") && table.contains("sentence-level"), "{table}");
    assert!(dir.path().join("conll2003/out/ablation-modes.json").exists());
}
