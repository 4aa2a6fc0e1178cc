//! The `h2r` binary: subcommands, overrides and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn h2r(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_h2r"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn config() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/text_house/config.txt")
        .display()
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_workflow_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let run = s(dir.path());
    let cfg = config();
    let (code, out) = h2r(&["collect", "--config", &cfg, "--run-dir", run]);
    assert_eq!(code, 0);
    assert!(out.starts_with("pairs=6 "), "{out}");
    let (code, out) = h2r(&["reflect", "--config", &cfg, "--run-dir", run]);
    assert_eq!(code, 0);
    assert!(out.contains("high_units_built=6"), "{out}");
    for a in ["full", "no_high", "no_low", "no_memory"] {
        let (code, out) = h2r(&["eval", "--config", &cfg, "--run-dir", run, "--ablation", a]);
        assert_eq!(code, 0);
        assert!(out.contains(&format!("label={a}")));
    }
    let (code, table) = h2r(&["report", "--run-dir", run]);
    assert_eq!(code, 0);
    assert_eq!(table.lines().count(), 6);
    assert_eq!(std::fs::read_to_string(dir.path().join("summary.txt")).unwrap(), table);
    assert!(table.contains("100.0%"));
}

#[test]
fn overrides_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let run = s(dir.path());
    let cfg = config();
    // unknown override key is a config error
    assert_eq!(h2r(&["collect", "--config", &cfg, "--run-dir", run, "--set", "k_mid=1"]).0, 1);
    assert_eq!(h2r(&["collect", "--config", "/no/such/config.txt"]).0, 1);
    // reflect before collect: missing prerequisite
    assert_eq!(h2r(&["reflect", "--config", &cfg, "--run-dir", run]).0, 3);
    assert_eq!(h2r(&["report", "--run-dir", run]).0, 3);
    // a task seed the script does not cover: the backend cannot answer
    assert_eq!(h2r(&["collect", "--config", &cfg, "--run-dir", run, "--set", "task_seed=1234"]).0, 2);
    // overrides apply: an empty test split evaluates zero episodes
    let (code, out) = h2r(&["eval", "--config", &cfg, "--run-dir", run, "--ablation", "no_memory", "--set", "n_test=0"]);
    assert_eq!(code, 0);
    assert!(out.contains("episodes=0"), "{out}");
}
