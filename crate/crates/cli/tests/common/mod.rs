#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stanceformer"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs a command that must succeed and returns the path it printed.
pub fn run_ok(args: &[&str]) -> PathBuf {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic corpus under `dir/data`.
pub fn synth_data(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    run_ok(&[
        "synth",
        "--out",
        s(&data),
        "--seed",
        "1",
        "--synth.n_train",
        "96",
        "--synth.n_val",
        "32",
        "--synth.n_test",
        "32",
    ]);
    data
}

/// Data and a fast model, as `key = value` lines.
pub fn quick_config(dir: &Path, data: &Path) -> PathBuf {
    let p = dir.join("quick.cfg");
    let body = format!(
        "# tiny settings for fast runs\n\
         data.train = {0}/train.jsonl\n\
         data.val = {0}/val.jsonl\n\
         data.test = {0}/test.jsonl\n\
         data.labels = {0}/labels.txt\n\
         model.n_layers = 2\n\
         model.d_model = 16\n\
         model.d_ff = 32\n\
         model.max_len = 16\n\
         train.epochs = 2\n\
         train.batch_size = 16\n",
        data.display()
    );
    fs::write(&p, body).unwrap();
    p
}

/// Every file under `dir`, relative path and bytes, sorted.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
