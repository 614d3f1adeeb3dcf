#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const MODEL: &str = r#""geometry": { "source": [-2.0, -1.0], "target": [0.0, 1.0] }"#;

pub fn trunctx(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trunctx"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

pub fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

/// Runs a config given as JSON text; returns the process output and the output directory.
pub fn run_config(dir: &Path, name: &str, body: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = write_config(dir, &format!("{name}.json"), body);
    let out = dir.join(name);
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (trunctx(&args, dir), out)
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}
