//! Flat `section.key = value` configuration with strict keys.
//!
//! Precedence: built-in defaults, then the `--config` file, then flags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use stanceformer::encoder::ModelConfig;
use stanceformer::tamatrix::{Placement, TargetAwarenessConfig, ALPHA_GRID};
use stanceformer::textdata::SynthSpec;
use stanceformer::traineval::{Convention, TrainConfig};
use stanceformer::{Error, Result};

/// Every accepted key with its default.
const KEYS: &[(&str, &str)] = &[
    ("run.seed", "0"),
    ("run.out", "runs"),
    ("run.checkpoint", ""),
    ("data.train", ""),
    ("data.val", ""),
    ("data.test", ""),
    ("data.labels", ""),
    ("model.n_layers", "2"),
    ("model.n_heads", "4"),
    ("model.d_model", "64"),
    ("model.d_ff", "128"),
    ("model.max_len", "48"),
    ("model.dropout", "0.1"),
    ("train.epochs", "30"),
    ("train.batch_size", "32"),
    ("train.lr", "0.001"),
    ("train.patience", "5"),
    ("train.convention", "all_labels"),
    ("ta.alpha", "0.5"),
    ("ta.placement", "all"),
    ("ta.enabled_at_inference", "true"),
    ("grid.alphas", ""),
    ("ablate.seeds", "0,1,2"),
    ("ablate.search_alpha", "true"),
    ("attention.input", ""),
    ("attention.sites", "all"),
    ("synth.n_train", "512"),
    ("synth.n_val", "128"),
    ("synth.n_test", "128"),
    ("synth.n_targets", "4"),
    ("synth.vocab_size", "64"),
];

#[derive(Clone, Debug)]
pub struct Settings {
    values: BTreeMap<String, String>,
    /// Keys set by a file or a flag rather than left at the default.
    explicit: BTreeSet<String>,
}

impl Default for Settings {
    fn default() -> Self {
        let mut values: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        values.insert("grid.alphas".into(), join(&ALPHA_GRID));
        Settings {
            values,
            explicit: BTreeSet::new(),
        }
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub fn is_known_key(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known_key(key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// `key = value` lines; `#` starts a comment line.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, raw) in body.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}: line {}: expected `key = value`", path.display(), i + 1))
            })?;
            let key = key.trim();
            if !is_known_key(key) {
                return Err(Error::Config(format!(
                    "{}: line {}: unknown config key `{key}`",
                    path.display(),
                    i + 1
                )));
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    pub fn is_explicit_prefix(&self, prefix: &str) -> bool {
        self.explicit.iter().any(|k| k.starts_with(prefix))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| Error::Config(format!("config key `{key}`: cannot parse `{v}`: {e}")))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        let v = self.get(key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| Error::Config(format!("config key `{key}`: cannot parse `{s}`: {e}")))
            })
            .collect()
    }

    /// Every key, sorted, as the snapshot file and report metadata see it.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    /// Readable back through `--config`.
    pub fn snapshot(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let seed: u64 = self.parse("run.seed")?;
        let model = ModelConfig {
            n_layers: self.parse("model.n_layers")?,
            n_heads: self.parse("model.n_heads")?,
            d_model: self.parse("model.d_model")?,
            d_ff: self.parse("model.d_ff")?,
            max_len: self.parse("model.max_len")?,
            dropout: self.parse("model.dropout")?,
            seed,
            ..ModelConfig::default()
        };
        model.validate()?;
        let train = TrainConfig {
            epochs: self.parse("train.epochs")?,
            batch_size: self.parse("train.batch_size")?,
            lr: self.parse("train.lr")?,
            seed,
            patience: self.parse("train.patience")?,
            convention: self.parse("train.convention")?,
        };
        train.validate()?;
        let ta = TargetAwarenessConfig {
            alpha: self.parse("ta.alpha")?,
            placement: self.parse("ta.placement")?,
            enabled_at_inference: self.parse("ta.enabled_at_inference")?,
        };
        ta.validate_for(model.n_layers, model.n_heads)?;
        let alphas: Vec<f64> = self.list("grid.alphas")?;
        if alphas.is_empty() {
            return Err(Error::Config("config key `grid.alphas` is empty".into()));
        }
        for &a in &alphas {
            TargetAwarenessConfig::new(a)?;
        }
        let ablate_seeds: Vec<u64> = self.list("ablate.seeds")?;
        if ablate_seeds.is_empty() {
            return Err(Error::Config("config key `ablate.seeds` is empty".into()));
        }
        let synth = SynthSpec {
            seed,
            n_train: self.parse("synth.n_train")?,
            n_val: self.parse("synth.n_val")?,
            n_test: self.parse("synth.n_test")?,
            n_targets: self.parse("synth.n_targets")?,
            vocab_size: self.parse("synth.vocab_size")?,
        };
        Ok(RunConfig {
            seed,
            out: PathBuf::from(self.get("run.out")),
            checkpoint: self.path("run.checkpoint"),
            train_path: self.path("data.train"),
            val_path: self.path("data.val"),
            test_path: self.path("data.test"),
            labels_path: self.path("data.labels"),
            model,
            train,
            ta,
            ta_explicit: self.is_explicit_prefix("ta."),
            alphas,
            ablate_seeds,
            search_alpha: self.parse("ablate.search_alpha")?,
            attention_input: self.path("attention.input"),
            attention_sites: self.parse("attention.sites")?,
            synth,
        })
    }
}

/// Fully typed view of [`Settings`], built before any work starts.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub train_path: Option<PathBuf>,
    pub val_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub labels_path: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ta: TargetAwarenessConfig,
    pub ta_explicit: bool,
    pub alphas: Vec<f64>,
    pub ablate_seeds: Vec<u64>,
    pub search_alpha: bool,
    pub attention_input: Option<PathBuf>,
    pub attention_sites: Placement,
    pub synth: SynthSpec,
}

impl RunConfig {
    pub fn convention(&self) -> Convention {
        self.train.convention
    }

    pub fn require<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        p.as_deref()
            .ok_or_else(|| Error::Config(format!("config key `{key}` is required for this command")))
    }
}
