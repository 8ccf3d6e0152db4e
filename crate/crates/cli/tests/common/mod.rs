#![allow(dead_code)]

use std::ffi::OsStr;
use std::path::{Path, PathBuf};
use std::process::Command;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn drawcal<A: AsRef<OsStr>>(args: &[A]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_drawcal"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("readable")).expect("json")
}

/// Writes `scenario` with `seed` to `dir` and synthesizes it; returns the CSV path.
pub fn synth(dir: &Path, scenario: &str, seed: u64) -> PathBuf {
    let data = dir.join(format!("{scenario}-{seed}.csv"));
    let truth = dir.join(format!("{scenario}-{seed}.truth.json"));
    let run = drawcal(&[
        "synth",
        "--scenario",
        s(&config(&format!("{scenario}.json"))),
        "--out",
        s(&data),
        "--truth",
        s(&truth),
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    data
}

pub fn calibrate(dir: &Path, data: &Path, method: &str, extra: &[&str]) -> (Run, PathBuf) {
    let out = dir.join(format!(
        "{}-{method}.json",
        data.file_stem().unwrap().to_str().unwrap()
    ));
    let model = config("bench_arm.json");
    let mut args = vec!["calibrate", "--model", s(&model), "--data", s(data), "--method", method, "--out", s(&out)];
    args.extend_from_slice(extra);
    (drawcal(&args), out)
}
