//! End-to-end tests of the `fas` binary: exit codes, artifact determinism,
//! and the config echo contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fas(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fas"));
    cmd.args(args);
    cmd
}

fn run(args: &[&str]) -> Output {
    fas(args).output().expect("spawning the fas binary")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process was signalled")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Every regular file under `dir`, keyed by relative path, with raw bytes.
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// A dataset and model small enough that a full pipeline runs in seconds.
const TINY_CONFIG: &str = r#"{
  "fas": { "d": 8, "s": 5, "k_aco": 2, "k_sem": 3, "n_q": 2, "dropout": 0.1,
           "d_aco_in": 8, "d_sem_in": 12, "n_classes": 3, "ffn_expansion": 2 },
  "train": { "epochs": 2, "batch_size": 8, "seed": 7 },
  "synth": { "n_classes": 3, "samples_per_class": 6, "d_aco": 8, "d_sem": 12,
             "aco_frames": [20, 30], "sem_frames": [15, 25], "seed": 7 }
}"#;

fn write_tiny_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    fs::write(&path, TINY_CONFIG).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn invalid_config_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{ "synth": { "conflict_fraction": 1.5 } }"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "synth"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("conflict_fraction"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{ "fas": { "depth": 3 } }"#).unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "synth"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn gradcheck_refuses_large_models_with_exit_2() {
    // default d = 512: finite differences would take hours
    let out = run(&["gradcheck"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("d <= 8"), "{}", stderr(&out));
}

#[test]
fn missing_manifest_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = run(&["train", "--manifest", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn invalid_threads_env_exits_2() {
    let out = fas(&["gradcheck"]).env("FAS_THREADS", "zero").output().unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("FAS_THREADS"), "{}", stderr(&out));
}

#[test]
fn inspect_unknown_format_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.bin");
    fs::write(&path, b"XXXX not a known format").unwrap();
    let out = run(&["inspect", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("FASF"), "{}", stderr(&out));
}

#[test]
fn print_params_reports_frozen_counts() {
    for (variant, expected) in
        [("fas", 3_318_791usize), ("concat", 1_217_543), ("gated", 1_742_343)]
    {
        let out = run(&["train", "--variant", variant, "--print-params"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert_eq!(stdout(&out).trim(), format!("param_count={expected}"), "variant {variant}");
    }
}

#[test]
fn synth_is_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = run(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "--quiet", "synth"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(tree(&dir.path().join("a")), tree(&dir.path().join("b")));
}

#[test]
fn effective_config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let first = dir.path().join("first");
    let out = run(&["--config", &cfg, "--out", first.to_str().unwrap(), "--quiet", "synth"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // feed the echoed config back in: identical artifacts
    let echoed = first.join("effective_config.json");
    let second = dir.path().join("second");
    let out = run(&[
        "--config",
        echoed.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
        "--quiet",
        "synth",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(tree(&first), tree(&second));
}

#[test]
fn synth_train_eval_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let data = dir.path().join("data");
    let out = run(&["--config", &cfg, "--out", data.to_str().unwrap(), "--quiet", "synth"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let manifest = data.join("manifest.json");
    let out = run(&["inspect", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("labels=3"), "{}", stdout(&out));

    let run_dir = dir.path().join("run");
    let out = run(&[
        "--config",
        &cfg,
        "--out",
        run_dir.to_str().unwrap(),
        "--quiet",
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for artifact in ["checkpoint.fasc", "history.csv", "history.json"] {
        assert!(run_dir.join(artifact).is_file(), "missing {artifact}");
    }

    let ckpt = run_dir.join("checkpoint.fasc");
    let out = run(&["inspect", ckpt.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("epoch=2"), "{}", stdout(&out));

    let eval_dir = dir.path().join("eval");
    let out = run(&[
        "--out",
        eval_dir.to_str().unwrap(),
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("acc="), "{}", stdout(&out));
    assert!(eval_dir.join("metrics.json").is_file());
    assert!(eval_dir.join("confusion.csv").is_file());
}

#[test]
fn eval_rejects_mismatched_label_count_with_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let data = dir.path().join("data");
    run(&["--config", &cfg, "--out", data.to_str().unwrap(), "--quiet", "synth"]);
    let run_dir = dir.path().join("run");
    let manifest = data.join("manifest.json");
    run(&[
        "--config",
        &cfg,
        "--out",
        run_dir.to_str().unwrap(),
        "--quiet",
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
    ]);

    // drop one label name from the manifest: class count no longer matches
    let text = fs::read_to_string(&manifest).unwrap();
    let mut m: serde_json::Value = serde_json::from_str(&text).unwrap();
    let labels = m["labels"].as_array_mut().unwrap();
    labels.pop();
    m["samples"].as_array_mut().unwrap().retain(|s| s["label"].as_u64().unwrap() < 2);
    fs::write(&manifest, serde_json::to_string_pretty(&m).unwrap()).unwrap();

    let ckpt = dir.path().join("run/checkpoint.fasc");
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 5, "{}", stderr(&out));
}

#[test]
fn tiny_gradcheck_passes_all_variants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    fs::write(
        &cfg,
        r#"{ "fas": { "d": 6, "s": 2, "k_aco": 2, "k_sem": 3, "n_q": 2, "dropout": 0.2,
                      "d_aco_in": 4, "d_sem_in": 5, "n_classes": 4, "ffn_expansion": 2 } }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out =
        run(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "gradcheck"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    for variant in ["fas", "concat", "gated", "fas_no_topk", "fas_no_qlearn"] {
        assert!(text.contains(&format!("variant={variant} ")), "{text}");
    }
}
