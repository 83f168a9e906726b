use std::fs;
use std::path::Path;

use serde::Serialize;
use stanceformer::encoder::{attention_maps, Checkpoint};
use stanceformer::tamatrix::{target_mass, Placement, TargetAwarenessConfig};
use stanceformer::textdata::{
    load_jsonl, read_label_manifest, synth_corpus, to_jsonl, write_label_manifest, Dataset, TargetMode,
};
use stanceformer::traineval::{evaluate, grid_search_alpha, run_ablation, train, EvalReport, History, Splits};
use stanceformer::{Error, Result};

use crate::rundir::RunDir;
use crate::settings::{RunConfig, Settings};

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn history_csv(h: &History) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    h.write_csv(&mut buf)?;
    Ok(buf)
}

fn manifest(rc: &RunConfig) -> Result<Option<Vec<String>>> {
    rc.labels_path.as_deref().map(read_label_manifest).transpose()
}

/// Train split first; the others are checked against its label set.
fn load_splits(rc: &RunConfig, need_test: bool) -> Result<(Dataset, Dataset, Option<Dataset>)> {
    let labels = manifest(rc)?;
    let train = load_jsonl(rc.require(&rc.train_path, "data.train")?, "train", labels.as_deref())?;
    let known = Some(train.labels.as_slice());
    let val = load_jsonl(rc.require(&rc.val_path, "data.val")?, "val", known)?;
    let test = match (&rc.test_path, need_test) {
        (Some(p), _) => Some(load_jsonl(p, "test", known)?),
        (None, true) => return Err(Error::Config("config key `data.test` is required for this command".into())),
        (None, false) => None,
    };
    Ok((train, val, test))
}

fn load_all(rc: &RunConfig) -> Result<Splits> {
    let (train, val, test) = load_splits(rc, true)?;
    Splits::new(train, val, test.expect("test required"))
}

fn load_checkpoint(rc: &RunConfig) -> Result<Checkpoint<f32>> {
    Checkpoint::load(rc.require(&rc.checkpoint, "run.checkpoint")?)
}

/// The checkpoint's bias settings unless `ta.*` was given; the settings are
/// updated so the snapshot records what actually ran.
fn effective_ta(rc: &RunConfig, settings: &mut Settings, ck: &Checkpoint<f32>) -> Result<TargetAwarenessConfig> {
    let ta = if rc.ta_explicit { rc.ta.clone() } else { ck.ta.clone() };
    let cfg = ck.params.config();
    ta.validate_for(cfg.n_layers, cfg.n_heads)?;
    settings.set("ta.alpha", &ta.alpha.to_string())?;
    settings.set("ta.placement", &ta.placement.to_string())?;
    settings.set("ta.enabled_at_inference", &ta.enabled_at_inference.to_string())?;
    Ok(ta)
}

fn with_config(mut report: EvalReport, settings: &Settings) -> EvalReport {
    report.config = settings.to_map();
    report
}

pub fn cmd_train(rc: &RunConfig, settings: &mut Settings, dir: &RunDir) -> Result<()> {
    let (train_set, val, test) = load_splits(rc, false)?;
    let m = train::<f32>(&train_set, &val, &rc.model, &rc.ta, &rc.train)?;
    let scored = test.as_ref().unwrap_or(&val);
    let report = evaluate(&m.checkpoint, &rc.ta, scored, rc.convention())?;
    dir.write("checkpoint", m.checkpoint.to_json()?)?;
    dir.write("history.csv", history_csv(&m.history)?)?;
    dir.write("report.json", json(&with_config(report, settings))?)
}

pub fn cmd_eval(rc: &RunConfig, settings: &mut Settings, dir: &RunDir) -> Result<()> {
    let ck = load_checkpoint(rc)?;
    let ta = effective_ta(rc, settings, &ck)?;
    let test = load_jsonl(rc.require(&rc.test_path, "data.test")?, "test", Some(&ck.labels))?;
    let report = evaluate(&ck, &ta, &test, rc.convention())?;
    dir.write("report.json", json(&with_config(report, settings))?)
}

fn grid_csv(g: &stanceformer::traineval::GridResult) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    g.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn cmd_gridsearch(rc: &RunConfig, _settings: &mut Settings, dir: &RunDir) -> Result<()> {
    let splits = load_all(rc)?;
    let out = grid_search_alpha::<f32>(&splits, &rc.model, &rc.ta, &rc.train, &rc.alphas)?;
    dir.write("checkpoint", out.best.checkpoint.to_json()?)?;
    dir.write("history.csv", history_csv(&out.best.history)?)?;
    dir.write("grid.csv", grid_csv(&out.result)?)?;
    dir.write("report.json", json(&out.result)?)
}

pub fn cmd_ablate(rc: &RunConfig, _settings: &mut Settings, dir: &RunDir) -> Result<()> {
    let splits = load_all(rc)?;
    let alpha = if rc.search_alpha {
        let grid = grid_search_alpha::<f32>(&splits, &rc.model, &rc.ta, &rc.train, &rc.alphas)?;
        dir.write("grid.csv", grid_csv(&grid.result)?)?;
        grid.result.chosen_alpha
    } else {
        rc.ta.alpha
    };
    let report = run_ablation::<f32>(&splits, &rc.model, &rc.train, &rc.ta.with_alpha(alpha), &rc.ablate_seeds)?;
    dir.write("ablation.md", report.to_markdown())?;
    dir.write("report.json", json(&report)?)
}

#[derive(Serialize)]
struct MapDump {
    layer: usize,
    head: usize,
    /// Row sums of the target columns.
    target_mass: Vec<f32>,
    matrix: Vec<Vec<f32>>,
}

#[derive(Serialize)]
struct ExampleDump {
    index: usize,
    text: String,
    target: String,
    tokens: Vec<String>,
    text_span: [usize; 2],
    target_span: [usize; 2],
    pad_len: usize,
    alpha: f64,
    /// Mean target mass over target rows of every dumped map.
    mean_target_mass: f64,
    maps: Vec<MapDump>,
}

fn check_sites(sites: &Placement, layers: usize, heads: usize) -> Result<()> {
    if let Placement::Sites(s) = sites {
        if let Some((l, h)) = s.iter().find(|(l, h)| *l >= layers || *h >= heads) {
            return Err(Error::Config(format!(
                "config key `attention.sites`: {l}:{h} outside model of {layers} layers x {heads} heads"
            )));
        }
    }
    Ok(())
}

pub fn cmd_attention(rc: &RunConfig, settings: &mut Settings, dir: &RunDir) -> Result<()> {
    let ck = load_checkpoint(rc)?;
    let ta = effective_ta(rc, settings, &ck)?;
    let cfg = ck.params.config();
    check_sites(&rc.attention_sites, cfg.n_layers, cfg.n_heads)?;
    let input = load_jsonl(rc.require(&rc.attention_input, "attention.input")?, "attention", Some(&ck.labels))?;
    let encoded = input.encode(&ck.vocab, cfg.max_len, TargetMode::Original)?;
    for (i, (raw, ex)) in input.examples.iter().zip(&encoded).enumerate() {
        let span = ex.target_span.clone();
        let mut maps = Vec::new();
        let mut mass_sum = 0.0;
        let mut mass_rows = 0usize;
        for m in attention_maps(ex, &ck.params, &ta)? {
            if !rc.attention_sites.contains(m.layer, m.head) {
                continue;
            }
            let n = m.matrix.shape()[1];
            let matrix: Vec<Vec<f32>> = m.matrix.data().chunks(n).map(<[f32]>::to_vec).collect();
            let mass: Vec<f32> = matrix.iter().map(|row| target_mass(row, &span)).collect();
            for r in span.clone() {
                mass_sum += f64::from(mass[r]);
                mass_rows += 1;
            }
            maps.push(MapDump {
                layer: m.layer,
                head: m.head,
                target_mass: mass,
                matrix,
            });
        }
        let dump = ExampleDump {
            index: i,
            text: raw.text.clone(),
            target: raw.target.clone(),
            tokens: ex.ids.iter().map(|&id| ck.vocab.token(id).unwrap_or("[UNK]").to_string()).collect(),
            text_span: [ex.text_span.start, ex.text_span.end],
            target_span: [span.start, span.end],
            pad_len: ex.pad_len,
            alpha: ta.alpha,
            mean_target_mass: mass_sum / mass_rows.max(1) as f64,
            maps,
        };
        dir.write(&format!("attention/{i:04}.json"), json(&dump)?)?;
    }
    Ok(())
}

/// Writes the corpus straight into `out`; each file is staged then renamed.
pub fn cmd_synth(rc: &RunConfig) -> Result<()> {
    let corpus = synth_corpus(&rc.synth)?;
    let out = rc.out.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let stage = |name: &str, bytes: Vec<u8>| -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        let tmp = out.join(format!(".{name}.partial"));
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        Ok((tmp, out.join(name)))
    };
    let labels_tmp = out.join(".labels.txt.partial");
    write_label_manifest(&corpus.train.labels, &labels_tmp)?;
    let staged = vec![
        stage("train.jsonl", to_jsonl(&corpus.train)?)?,
        stage("val.jsonl", to_jsonl(&corpus.val)?)?,
        stage("test.jsonl", to_jsonl(&corpus.test)?)?,
        (labels_tmp, out.join("labels.txt")),
    ];
    for (tmp, dst) in staged {
        rename(&tmp, &dst)?;
    }
    Ok(())
}

fn rename(from: &Path, to: &Path) -> Result<()> {
    fs::rename(from, to).map_err(|e| Error::io(to, e))
}
