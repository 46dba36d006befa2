//! Helpers shared by the CLI integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const STAGES: [&str; 6] = ["harmonize", "overlap", "zonal", "features", "train", "report"];

pub fn settle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_settle"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("settle binary runs")
}

pub fn settle_ok(args: &[&str]) -> String {
    let out = settle(args);
    assert!(
        out.status.success(),
        "settle {args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("UTF-8 temp paths")
}

/// `synth` into `work`, then every stage on the written config.
pub fn run_pipeline(work: &Path, threads: usize) -> PathBuf {
    let t = threads.to_string();
    settle_ok(&["synth", "--out", path_str(work), "--threads", &t]);
    let config = work.join("pipeline.toml");
    for stage in STAGES {
        settle_ok(&[stage, "--config", path_str(&config), "--threads", &t]);
    }
    work.join("results")
}

/// Every CSV, JSON and SVG output under `results`, keyed by relative path.
pub fn collect_outputs(results: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![results.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                if p.file_name().unwrap() != "cache" {
                    stack.push(p);
                }
                continue;
            }
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
            if matches!(ext, "csv" | "json" | "svg") {
                let rel = p.strip_prefix(results).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Replaces the committed golden files with `outputs`.
pub fn write_golden(outputs: &BTreeMap<String, Vec<u8>>) {
    let dir = golden_dir();
    let _ = std::fs::remove_dir_all(&dir);
    for (rel, bytes) in outputs {
        let p = dir.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, bytes).unwrap();
    }
}

/// First difference between `outputs` and the golden files, if any.
pub fn golden_mismatch(outputs: &BTreeMap<String, Vec<u8>>) -> Option<String> {
    let golden = collect_outputs(&golden_dir());
    if golden.is_empty() {
        return Some("no golden files; run with UPDATE_GOLDEN=1".into());
    }
    let (a, b): (Vec<_>, Vec<_>) = (golden.keys().collect(), outputs.keys().collect());
    if a != b {
        return Some(format!("file sets differ: golden {a:?} vs produced {b:?}"));
    }
    golden
        .iter()
        .find(|(k, v)| outputs[*k] != **v)
        .map(|(k, _)| format!("{k} differs from its golden copy"))
}
