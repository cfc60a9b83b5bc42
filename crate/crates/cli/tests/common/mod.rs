#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vibkit"));
    cmd.env_remove("VIBKIT_OUT_DIR");
    cmd
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn manifest(&self) -> Value {
        serde_json::from_str(&self.stdout)
            .unwrap_or_else(|e| panic!("bad manifest ({e}): {}", self.stdout))
    }
}

fn finish(out: Output) -> Run {
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn run(args: &[&str]) -> Run {
    finish(bin().args(args).output().expect("binary runs"))
}

pub fn run_in(out_dir: &Path, args: &[&str]) -> Run {
    finish(
        bin()
            .env("VIBKIT_OUT_DIR", out_dir)
            .args(args)
            .output()
            .expect("binary runs"),
    )
}

/// Runs and insists on exit 0.
pub fn ok(args: &[&str]) -> Value {
    let r = run(args);
    assert_eq!(r.code, 0, "vibkit {args:?} failed: {}", r.stderr);
    r.manifest()
}

pub fn s(p: &Path) -> String {
    p.display().to_string()
}

/// Headerless CSV, one row per frame.
pub fn write_matrix(path: &Path, m: &ndarray::Array2<f64>) {
    let text: String = m
        .rows()
        .into_iter()
        .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(path, text).unwrap();
}

/// Every regular file under `dir`, relative, sorted.
pub fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}
