use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnet"))
        .args(args)
        .env("QNET_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small keyword run: n=2, d=2, few short steps.
const SMALL: &[&str] = &[
    "--n", "2", "--d", "2", "--synthetic-size", "60", "--epochs", "2", "--steps-per-epoch", "5",
    "--batch-size", "4",
];

fn train(out: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    let o = qnet(&args);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    PathBuf::from(stdout(&o).trim())
}

fn only_subdir(dir: &Path) -> PathBuf {
    let entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1, "{entries:?}");
    entries.into_iter().next().unwrap()
}

#[test]
fn default_schedule_writes_five_hundred_metric_lines() {
    let out = tempfile::tempdir().unwrap();
    let o = qnet(&[
        "train", "--out", out.path().to_str().unwrap(), "--n", "4", "--d", "2", "--blocks", "1",
        "--synthetic-size", "100", "--batch-size", "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    let dir = PathBuf::from(stdout(&o).trim());
    for file in ["config.json", "metrics.jsonl", "checkpoint.json", "circuit.txt"] {
        assert!(dir.join(file).is_file(), "missing {file}");
    }
    let metrics = fs::read_to_string(dir.join("metrics.jsonl")).unwrap();
    let lines: Vec<Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 500);
    assert_eq!(lines[0]["step"], 1);
    assert_eq!(lines[499]["step"], 500);
    let evals = lines.iter().filter(|l| l.get("eval").is_some()).count();
    assert_eq!(evals, 5);
}

#[test]
fn rerun_from_saved_config_is_bit_identical() {
    let out = tempfile::tempdir().unwrap();
    let first = train(out.path(), &["--seed", "7"]);
    let config = first.join("config.json");
    let o = qnet(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    let second = PathBuf::from(stdout(&o).trim());
    assert_ne!(first, second);
    for file in ["metrics.jsonl", "checkpoint.json", "config.json"] {
        assert_eq!(
            fs::read(first.join(file)).unwrap(),
            fs::read(second.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn eval_reads_back_a_checkpoint() {
    let out = tempfile::tempdir().unwrap();
    let dir = train(out.path(), &[]);
    let ck = dir.join("checkpoint.json");
    let mut args = vec!["eval", "--checkpoint", ck.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let o = qnet(&args);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    let metrics: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let acc = metrics["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(metrics["examples"], 16);
}

#[test]
fn mixture_only_dump_has_no_feedforward_segment() {
    let out = tempfile::tempdir().unwrap();
    let dir = train(out.path(), &["--ablation", "mixture_only"]);
    let dump = fs::read_to_string(dir.join("circuit.txt")).unwrap();
    assert!(dump.contains("[mix[0]]"));
    assert!(!dump.contains("[ff["));
}

#[test]
fn zero_noise_sweep_matches_plain_training() {
    let out = tempfile::tempdir().unwrap();
    let run = train(out.path(), &["--seed", "3"]);
    let sweep_out = out.path().join("sweeps");
    let mut args = vec!["noise-sweep", "--p", "0", "--seed", "3", "--out", sweep_out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let o = qnet(&args);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    let sweep = only_subdir(&sweep_out);
    assert!(sweep.join("summary.json").is_file());
    assert_eq!(
        fs::read(run.join("metrics.jsonl")).unwrap(),
        fs::read(sweep.join("p0").join("metrics.jsonl")).unwrap()
    );
}

#[test]
fn noisy_sweep_records_one_run_per_probability() {
    let out = tempfile::tempdir().unwrap();
    let mut args = vec!["noise-sweep", "--p", "0.1,0.5", "--trajectories", "2", "--out", out.path().to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let o = qnet(&args);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    let summary: Value = serde_json::from_str(&fs::read_to_string(only_subdir(out.path()).join("summary.json")).unwrap()).unwrap();
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    for run in runs {
        assert!(run["jitter"].as_f64().unwrap() >= 0.0);
        let dir = PathBuf::from(run["dir"].as_str().unwrap());
        assert_eq!(fs::read_to_string(dir.join("metrics.jsonl")).unwrap().lines().count(), 10);
    }
}

#[test]
fn analyze_reports_wide_configurations_symbolically() {
    let out = tempfile::tempdir().unwrap();
    let o = qnet(&["analyze", "--d", "128", "--blocks", "2", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.path().join("analyze.json")).unwrap()).unwrap();
    assert_eq!(report["base"]["qnet_params"], 2304);

    let o = qnet(&["analyze", "--d", "1", "--sweep-n", "2,4,8,16", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.path().join("analyze.json")).unwrap()).unwrap();
    let rows = report["sweep_n"].as_array().unwrap();
    let gates: Vec<f64> = rows.iter().map(|r| r["mixture_gates"].as_f64().unwrap()).collect();
    let ratio = gates[3] / gates[2];
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    assert!(rows.iter().all(|r| r["encoding_depth"] == 2));
}

#[test]
fn gradcheck_passes_and_flags_a_corrupted_rule() {
    let o = qnet(&["gradcheck", "--n", "2", "--d", "2", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    let text = stdout(&o);
    let json_end = text.rfind('}').unwrap();
    let report: Value = serde_json::from_str(&text[..=json_end]).unwrap();
    assert!(report["max_deviation"].as_f64().unwrap() <= 1e-6);
    for v in report["unused_probe"].as_array().unwrap() {
        assert!(v.as_f64().unwrap().abs() < 1e-9);
    }

    let o = qnet(&["gradcheck", "--n", "2", "--d", "2", "--seed", "5", "--corrupt-shift", "0.4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gradcheck failed"));

    let o = qnet(&["gradcheck", "--n", "3", "--d", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let out = tempfile::tempdir().unwrap();
    let o = qnet(&["train", "--d", "0", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`d`"));

    let o = qnet(&["train", "--n", "16", "--d", "2", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let bad = out.path().join("bad.json");
    fs::write(&bad, r#"{"n": 2, "learning_rate": 1.0}"#).unwrap();
    let o = qnet(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = qnet(&["train", "--dataset-path", "/nonexistent/x.csv", "--dataset-format", "csv"]);
    assert_eq!(o.status.code(), Some(1));

    let o = qnet(&["train", "--model", "transformer"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn conll_dataset_trains_a_token_head() {
    let out = tempfile::tempdir().unwrap();
    let data = out.path().join("tags.conll");
    let mut text = String::new();
    for i in 0..30 {
        let (name, city) = (format!("p{}", i % 5), format!("c{}", i % 3));
        text += &format!("{name}\tB-PER\nvisited\tO\n{city}\tB-LOC\n\n");
    }
    fs::write(&data, text).unwrap();
    let o = qnet(&[
        "train", "--out", out.path().to_str().unwrap(), "--dataset-path", data.to_str().unwrap(),
        "--dataset-format", "conll", "--n", "3", "--d", "2", "--epochs", "1", "--steps-per-epoch", "5",
        "--batch-size", "4",
    ]);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    let dir = PathBuf::from(stdout(&o).trim());
    let ck: Value = serde_json::from_str(&fs::read_to_string(dir.join("checkpoint.json")).unwrap()).unwrap();
    assert_eq!(ck["config"]["head"]["kind"], "token_classify");
    let last = fs::read_to_string(dir.join("metrics.jsonl")).unwrap();
    let last: Value = serde_json::from_str(last.lines().last().unwrap()).unwrap();
    assert!(last["eval"]["f1_non_o"].as_f64().is_some());
}
