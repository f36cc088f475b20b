#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn study_config() -> PathBuf {
    repo_file("configs/occupation-study.toml")
}

/// Runs the binary with a fixed creation time so reports are reproducible.
pub fn ttifair(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttifair"))
        .args(args)
        .current_dir(cwd)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env_remove("TTIFAIR_TOKEN")
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Synthetic records for the study config, written to `dir/name`.
pub fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let cfg = study_config();
    let mut args = vec!["synth", "--config", cfg.to_str().unwrap(), "--out", name];
    args.extend_from_slice(extra);
    let out = ttifair(&args, dir);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir.join(name)
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

pub fn write_json(path: &Path, v: &serde_json::Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}
