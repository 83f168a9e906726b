mod common;

use std::fs;
use std::path::Path;

use common::{quick_config, run, run_ok, s, synth_data};
use stanceformer::textdata::load_jsonl;

fn snapshot_value(dir: &Path, key: &str) -> String {
    let body = fs::read_to_string(dir.join("config.snapshot")).unwrap();
    body.lines()
        .find_map(|l| l.split_once(" = ").filter(|(k, _)| *k == key).map(|(_, v)| v.to_string()))
        .unwrap_or_else(|| panic!("{key} missing from snapshot"))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn grid_rows(dir: &Path) -> Vec<(f64, f64, bool)> {
    let body = fs::read_to_string(dir.join("grid.csv")).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("alpha,val_f1,chosen"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn misspelled_key_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["train", "--out", s(tmp.path()), "--ta.alhpa", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ta.alhpa"));
    assert_eq!(fs::read_dir(tmp.path()).map(|d| d.count()).unwrap_or(0), 0);

    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "train.epoch = 3\n").unwrap();
    let out = run(&["train", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train.epoch") && err.contains("line 1"), "{err}");
}

#[test]
fn flag_overrides_file_and_lands_in_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_data(tmp.path());
    let cfg = quick_config(tmp.path(), &data);
    let mut body = fs::read_to_string(&cfg).unwrap();
    body.push_str("ta.alpha = 0.9\n");
    fs::write(&cfg, body).unwrap();
    let dir = run_ok(&["train", "--config", s(&cfg), "--out", s(&tmp.path().join("runs")), "--ta.alpha", "0.5"]);
    assert_eq!(snapshot_value(&dir, "ta.alpha"), "0.5");
    for f in ["checkpoint", "history.csv", "report.json", "config.snapshot"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let report = json(&dir.join("report.json"));
    assert_eq!(report["config"]["ta.alpha"], "0.5");
    let history = fs::read_to_string(dir.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,loss,val_f1\n"));
}

#[test]
fn gridsearch_rows_follow_alphas() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_data(tmp.path());
    let cfg = quick_config(tmp.path(), &data);
    let out = tmp.path().join("runs");

    let dir = run_ok(&["gridsearch", "--config", s(&cfg), "--out", s(&out), "--train.epochs", "1"]);
    let rows = grid_rows(&dir);
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().filter(|r| r.2).count(), 1);

    let dir = run_ok(&["gridsearch", "--config", s(&cfg), "--out", s(&out), "--alphas", "0.2,0.4"]);
    let rows = grid_rows(&dir);
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0.2, 0.4]);
    let report = json(&dir.join("report.json"));
    let chosen = report["chosen_alpha"].as_f64().unwrap();
    let vals: Vec<f64> = report["val_f1"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(vals, rows.iter().map(|r| r.1).collect::<Vec<_>>());
    assert!(rows.iter().any(|r| r.2 && r.0 == chosen));
    assert!(dir.join("checkpoint").is_file());
}

#[test]
fn ablate_markdown_agrees_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_data(tmp.path());
    let cfg = quick_config(tmp.path(), &data);
    let dir = run_ok(&[
        "ablate",
        "--config",
        s(&cfg),
        "--out",
        s(&tmp.path().join("runs")),
        "--ablate.seeds",
        "4,7",
        "--grid.alphas",
        "0.3,0.8",
    ]);
    assert!(dir.join("grid.csv").is_file());
    let md = fs::read_to_string(dir.join("ablation.md")).unwrap();
    let report = json(&dir.join("report.json"));
    assert_eq!(report["seeds"], serde_json::json!([4, 7]));
    let arms = report["arms"].as_array().unwrap();
    assert_eq!(arms.len(), 3);
    let rows: Vec<Vec<String>> = md
        .lines()
        .skip(2)
        .map(|l| l.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for (row, arm) in rows.iter().zip(arms) {
        assert_eq!(row[0], arm["arm"].as_str().unwrap());
        let runs = arm["runs"].as_array().unwrap();
        assert_eq!(runs.len(), 2);
        let mut want: Vec<f64> = runs.iter().map(|r| r["macro_f1"].as_f64().unwrap()).collect();
        want.push(arm["mean"].as_f64().unwrap());
        want.push(arm["median"].as_f64().unwrap());
        for (cell, w) in row[3..].iter().zip(&want) {
            let got: f64 = cell.parse().unwrap();
            assert!((got - w).abs() <= 5e-5, "{cell} vs {w}");
        }
    }
}

#[test]
fn attention_dumps_are_distributions() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_data(tmp.path());
    let cfg = quick_config(tmp.path(), &data);
    let out = tmp.path().join("runs");
    let input = tmp.path().join("few.jsonl");
    let lines: Vec<String> = fs::read_to_string(data.join("test.jsonl")).unwrap().lines().take(5).map(String::from).collect();
    fs::write(&input, lines.join("\n") + "\n").unwrap();

    let train = run_ok(&["train", "--config", s(&cfg), "--out", s(&out), "--ta.alpha", "0.8"]);
    let ck = train.join("checkpoint");
    let dump = |extra: &[&str]| {
        let mut args = vec!["attention", "--config", s(&cfg), "--out", s(&out)];
        args.extend(["--run.checkpoint", s(&ck), "--attention.input", s(&input)]);
        args.extend(extra);
        run_ok(&args)
    };
    let mass = |dir: &Path| -> f64 {
        (0..5)
            .map(|i| json(&dir.join(format!("attention/{i:04}.json")))["mean_target_mass"].as_f64().unwrap())
            .sum()
    };

    let a = dump(&[]);
    let b = dump(&[]);
    assert_eq!(common::tree(&a), common::tree(&b));
    let first = json(&a.join("attention/0000.json"));
    assert_eq!(first["alpha"], 0.8);
    let maps = first["maps"].as_array().unwrap();
    assert_eq!(maps.len(), 8);
    let pad = first["pad_len"].as_u64().unwrap() as usize;
    for m in maps {
        let rows = m["matrix"].as_array().unwrap();
        for row in rows {
            let row: Vec<f64> = row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6, "row sum {sum}");
            assert!(row[row.len() - pad..].iter().all(|&p| p == 0.0));
        }
    }

    let zero = dump(&["--ta.alpha", "0"]);
    assert_eq!(snapshot_value(&zero, "ta.alpha"), "0");
    assert!(mass(&a) > mass(&zero));

    let one_site = dump(&["--attention.sites", "1:0"]);
    let maps = json(&one_site.join("attention/0000.json"))["maps"].as_array().unwrap().clone();
    assert_eq!(maps.len(), 1);
    assert_eq!((maps[0]["layer"].as_u64(), maps[0]["head"].as_u64()), (Some(1), Some(0)));
}

#[test]
fn eval_reports_checkpoint_on_test() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_data(tmp.path());
    let cfg = quick_config(tmp.path(), &data);
    let out = tmp.path().join("runs");
    let train = run_ok(&["train", "--config", s(&cfg), "--out", s(&out), "--ta.alpha", "0.6"]);
    let ck = train.join("checkpoint");
    let eval = run_ok(&["eval", "--config", s(&cfg), "--out", s(&out), "--run.checkpoint", s(&ck)]);
    // The checkpoint's alpha is used when none is given.
    assert_eq!(snapshot_value(&eval, "ta.alpha"), "0.6");
    let a = json(&train.join("report.json"));
    let b = json(&eval.join("report.json"));
    assert_eq!(a["macro_f1"], b["macro_f1"]);
    assert_eq!(b["n"], 32);
}

#[test]
fn synth_is_reproducible_and_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let printed = run_ok(&["synth", "--out", s(d), "--seed", "9", "--synth.n_train", "40", "--synth.n_val", "12"]);
        assert_eq!(&printed, d);
    }
    assert_eq!(common::tree(&a), common::tree(&b));
    for (f, n) in [("train.jsonl", 40), ("val.jsonl", 12), ("test.jsonl", 128)] {
        assert_eq!(fs::read_to_string(a.join(f)).unwrap().lines().count(), n);
        assert_eq!(load_jsonl(a.join(f), "x", None).unwrap().len(), n);
    }
    assert_eq!(fs::read_to_string(a.join("labels.txt")).unwrap().lines().count(), 3);
    assert!(!fs::read_dir(&a).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with('.')));
}

#[test]
fn failure_leaves_no_partial_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_data(tmp.path());
    let cfg = quick_config(tmp.path(), &data);
    let out = tmp.path().join("runs");
    let bad = tmp.path().join("bad.jsonl");
    fs::write(&bad, "{\"text\": \"x\"}\n").unwrap();
    let res = run(&["train", "--config", s(&cfg), "--out", s(&out), "--data.val", s(&bad)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(res.stdout.is_empty());
    let left: Vec<_> = fs::read_dir(&out).map(|d| d.map(|e| e.unwrap().file_name()).collect()).unwrap_or_default();
    assert!(left.is_empty(), "left behind: {left:?}");

    let res = run(&["eval", "--config", s(&cfg), "--out", s(&out), "--run.checkpoint", s(&tmp.path().join("none"))]);
    assert!(!res.status.success());
    assert_eq!(fs::read_dir(&out).map(|d| d.count()).unwrap_or(0), 0);
}
