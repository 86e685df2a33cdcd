#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub fn synthetic_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic")
}

/// Runs the CLI and returns stdout; panics with stderr on failure.
pub fn petm(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_petm")).args(args).output().expect("spawn petm");
    assert!(out.status.success(), "petm {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Replay config with absolute paths and the given mock mode.
pub fn write_config(dir: &Path, mock: &str) -> PathBuf {
    let data = synthetic_dir();
    let recorded = if mock == "recorded" { format!("recorded = {:?}\n", data.join("recorded.json")) } else { String::new() };
    let text = format!(
        "store = {:?}\noutput_dir = {:?}\ntasks = [\"mt\", \"ape\", \"mrk\"]\nshots = 5\nseed = 7\npool_size = 30\ntest_size = 20\n\n[provider]\nkind = \"mock\"\nmock = {mock:?}\n{recorded}label = \"Replay\"\n",
        data.join("petm.jsonl"),
        dir.join("out"),
    );
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// `run`, `score` and `report`; returns the rendered report.txt.
pub fn replay(config: &Path) -> String {
    let c = config.to_str().unwrap();
    petm(&["run", "--config", c]);
    petm(&["score", "--config", c]);
    petm(&["report", "--config", c]);
    std::fs::read_to_string(config.parent().unwrap().join("out/report.txt")).unwrap()
}
