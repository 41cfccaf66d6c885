//! End-to-end tests of the `lyasim` binary: files written, exit codes,
//! resume semantics and byte-level determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn lyasim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyasim"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Tiny two-device instance so every invocation finishes in milliseconds.
fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("cfg.json");
    fs::write(
        &path,
        r#"{
  "num_devices": 2,
  "services_per_device": 1,
  "period_slots": 4,
  "periods_per_episode": 3,
  "episodes": 3,
  "ppo": { "hidden": [8], "epochs": 2, "minibatch": 4 }
}"#,
    )
    .unwrap();
    path
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn train_writes_rows_checkpoint_and_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("run");
    let out = lyasim(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));

    let rows = lines(&out_dir.join("train.csv"));
    assert_eq!(rows.len(), 4, "header plus one row per episode");
    assert!(rows[0].starts_with("episode,algo,seed,reward,"));
    for (e, row) in rows[1..].iter().enumerate() {
        assert!(row.starts_with(&format!("{e},lyappo,11,")));
    }

    let cp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("checkpoint.json")).unwrap())
            .unwrap();
    assert_eq!(cp["version"], 1);
    assert_eq!(cp["episodes_trained"], 3);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("train.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["master_seed"], 11);
    assert_eq!(manifest["episodes_trained_total"], 3);
    assert_eq!(manifest["config"]["num_devices"], 2);
    let hash = manifest["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(manifest["run_id"].as_str().unwrap().starts_with(&hash[..12]));
}

#[test]
fn resume_reproduces_an_uninterrupted_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let straight = dir.path().join("straight");
    let split = dir.path().join("split");

    let out = lyasim(&["train", "--config", cfg, "--out", straight.to_str().unwrap(), "--seed", "5", "--episodes", "4"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    for _ in 0..2 {
        let out = lyasim(&["train", "--config", cfg, "--out", split.to_str().unwrap(), "--seed", "5", "--episodes", "2"]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    }

    assert_eq!(
        fs::read(straight.join("train.csv")).unwrap(),
        fs::read(split.join("train.csv")).unwrap(),
        "split training must append the exact rows of the straight run"
    );
    assert_eq!(
        fs::read(straight.join("checkpoint.json")).unwrap(),
        fs::read(split.join("checkpoint.json")).unwrap(),
        "resumed weights must match the uninterrupted ones"
    );
}

#[test]
fn equal_seeds_equal_bytes_and_seeds_matter() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = lyasim(&["train", "--config", cfg, "--out", out_dir.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
        fs::read(out_dir.join("train.csv")).unwrap()
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a, b, "same config and seed must produce identical CSV bytes");
    assert_ne!(a, c, "the master seed must change the trajectories");
}

#[test]
fn eval_covers_every_algorithm_and_requires_a_checkpoint_for_lyappo() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out_dir = dir.path().join("run");
    let out_str = out_dir.to_str().unwrap();

    let missing = lyasim(&["eval", "--config", cfg, "--out", out_str, "--algo", "lyappo"]);
    assert_eq!(code(&missing), 2);
    assert!(stderr_of(&missing).contains("checkpoint"), "{}", stderr_of(&missing));

    let out = lyasim(&["train", "--config", cfg, "--out", out_str, "--seed", "3"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    for algo in ["lyappo", "fixcov", "randomcov"] {
        let out = lyasim(&[
            "eval", "--config", cfg, "--out", out_str, "--seed", "3", "--algo", algo,
            "--episodes", "2",
        ]);
        assert_eq!(code(&out), 0, "{algo} stderr: {}", stderr_of(&out));
        let rows = lines(&out_dir.join(format!("eval_{algo}.csv")));
        assert_eq!(rows.len(), 3, "{algo}: header plus two episodes");
        assert!(rows[1].starts_with(&format!("0,{algo},3,")));
        assert!(out_dir.join(format!("eval_{algo}.manifest.json")).exists());
    }
}

#[test]
fn eval_rejects_a_checkpoint_from_another_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out_dir = dir.path().join("run");
    let out_str = out_dir.to_str().unwrap();
    let out = lyasim(&["train", "--config", cfg, "--out", out_str, "--episodes", "1"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));

    let other = dir.path().join("other.json");
    fs::write(&other, r#"{ "num_devices": 2, "services_per_device": 1, "arrival_rate": 0.25 }"#)
        .unwrap();
    let out = lyasim(&[
        "eval", "--config", other.to_str().unwrap(), "--out", out_str, "--algo", "lyappo",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("config"), "{}", stderr_of(&out));
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("sweep");
    let out = lyasim(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(),
        "--var", "local_cap_hz", "--values", "1e9,2e9", "--algo", "fixcov",
        "--episodes", "2",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let rows = lines(&out_dir.join("sweep.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("var,value,algo,"));
    assert!(rows[1].starts_with("local_cap_hz,1000000000,fixcov,0,2,"));
    assert!(rows[2].starts_with("local_cap_hz,2000000000,fixcov,0,2,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("sweep.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["var"], "local_cap_hz");
    assert_eq!(manifest["algos"], serde_json::json!(["fixcov"]));
}

#[test]
fn sweep_rejects_fractional_service_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let out = lyasim(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--out",
        dir.path().join("s").to_str().unwrap(), "--var", "services_per_device",
        "--values", "1.5", "--algo", "fixcov",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("services_per_device"), "{}", stderr_of(&out));
}

#[test]
fn selfcheck_reports_every_family_and_passes() {
    let out = lyasim(&["selfcheck"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let ok_lines = text.lines().filter(|l| l.starts_with("ok ")).count();
    assert_eq!(ok_lines, 8, "families reported:\n{text}");
    assert!(!text.contains("FAIL"), "{text}");
    assert!(text.contains("8 check families passed"), "{text}");
}

#[test]
fn config_problems_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let out_str = dir.path().join("run");
    let out_str = out_str.to_str().unwrap();

    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{ "num_devices": 2, "num_device": 1 }"#).unwrap();
    let out = lyasim(&["train", "--config", unknown.to_str().unwrap(), "--out", out_str]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("num_device"), "{}", stderr_of(&out));

    let invalid = dir.path().join("invalid.json");
    fs::write(&invalid, r#"{ "arrival_rate": -0.1 }"#).unwrap();
    let out = lyasim(&["train", "--config", invalid.to_str().unwrap(), "--out", out_str]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("arrival_rate"), "{}", stderr_of(&out));

    let out = lyasim(&["train", "--config", dir.path().join("nope.json").to_str().unwrap(), "--out", out_str]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("nope.json"), "{}", stderr_of(&out));
}

#[test]
fn usage_problems_exit_with_code_1() {
    assert_eq!(code(&lyasim(&[])), 1);
    assert_eq!(code(&lyasim(&["trainn"])), 1);
    assert_eq!(code(&lyasim(&["train", "--out", "x", "--bogus"])), 1);
    assert_eq!(code(&lyasim(&["eval", "--out", "x", "--algo", "ppo"])), 1);
    assert_eq!(
        code(&lyasim(&["sweep", "--out", "x", "--var", "carrier_hz", "--values", "1"])),
        1
    );
    assert_eq!(code(&lyasim(&["train"])), 1, "--out is required");

    let help = lyasim(&["--help"]);
    assert_eq!(code(&help), 0);
    let text = stdout_of(&help);
    for sub in ["train", "eval", "sweep", "selfcheck"] {
        assert!(text.contains(sub), "{text}");
    }
}
