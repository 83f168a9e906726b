use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textdata::example::{assemble, split_tokens, tokenize, TokenizedExample};
use crate::textdata::preprocess::preprocess;
use crate::textdata::vocab::{Vocabulary, UNK_ID};

/// One `(text, target, label)` triple. An empty target marks the masked-target
/// ablation state and is only produced by [`Dataset::masked_targets`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExample {
    pub text: String,
    pub target: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub split: String,
    pub examples: Vec<RawExample>,
    /// Index in this list is the label id.
    pub labels: Vec<String>,
}

/// How the target segment is fed to the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    Original,
    /// Target replaced by a single `[UNK]`, keeping the layout intact.
    Masked,
}

impl Dataset {
    pub fn new(split: impl Into<String>, examples: Vec<RawExample>, labels: Vec<String>) -> Result<Self> {
        let ds = Dataset {
            split: split.into(),
            examples,
            labels,
        };
        ds.check_labels()?;
        Ok(ds)
    }

    fn check_labels(&self) -> Result<()> {
        let distinct: BTreeSet<&String> = self.labels.iter().collect();
        if distinct.len() != self.labels.len() {
            return Err(Error::Data(format!("duplicate entries in label set {:?}", self.labels)));
        }
        for (i, ex) in self.examples.iter().enumerate() {
            if !self.labels.contains(&ex.label) {
                return Err(Error::Data(format!(
                    "{} example {}: label `{}` not in label set {:?}",
                    self.split,
                    i + 1,
                    ex.label,
                    self.labels
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Copy with every target blanked (the masked-target ablation arm).
    pub fn masked_targets(&self) -> Dataset {
        Dataset {
            split: self.split.clone(),
            examples: self
                .examples
                .iter()
                .map(|e| RawExample {
                    target: String::new(),
                    ..e.clone()
                })
                .collect(),
            labels: self.labels.clone(),
        }
    }

    /// Tokenizes and lays out every example.
    pub fn encode(&self, vocab: &Vocabulary, max_len: usize, mode: TargetMode) -> Result<Vec<TokenizedExample>> {
        self.examples
            .iter()
            .enumerate()
            .map(|(i, ex)| {
                let text = tokenize(&ex.text, vocab);
                let target = match mode {
                    TargetMode::Masked => vec![UNK_ID],
                    TargetMode::Original if ex.target.is_empty() => vec![UNK_ID],
                    TargetMode::Original => tokenize(&ex.target, vocab),
                };
                let label = self.label_id(&ex.label).ok_or_else(|| {
                    Error::Data(format!("{} example {}: unknown label `{}`", self.split, i + 1, ex.label))
                })?;
                assemble(&text, &target, max_len)
                    .map(|t| t.with_label(label))
                    .map_err(|e| Error::Data(format!("{} example {}: {e}", self.split, i + 1)))
            })
            .collect()
    }
}

/// Vocabulary over every text and target token in `data`, sorted.
pub fn build_vocab(data: &Dataset) -> Vocabulary {
    let mut words = BTreeSet::new();
    for ex in &data.examples {
        words.extend(split_tokens(&ex.text));
        words.extend(split_tokens(&ex.target));
    }
    Vocabulary::from_tokens(words)
}

#[derive(Deserialize)]
struct JsonLine {
    text: String,
    target: String,
    label: String,
}

/// Reads `{"text", "target", "label"}` objects, one per line, preprocessing
/// text and target. Without a manifest the label set is the sorted distinct
/// labels; with one, its order defines the ids and unknown labels are errors.
pub fn load_jsonl(path: impl AsRef<Path>, split: &str, manifest: Option<&[String]>) -> Result<Dataset> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JsonLine = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("{}: line {lineno}: {e}", path.display())))?;
        let text = preprocess(&parsed.text);
        let target = preprocess(&parsed.target);
        if text.is_empty() || target.is_empty() {
            let which = if text.is_empty() { "text" } else { "target" };
            return Err(Error::Data(format!(
                "{}: line {lineno}: {which} is empty after preprocessing",
                path.display()
            )));
        }
        if let Some(m) = manifest {
            if !m.contains(&parsed.label) {
                return Err(Error::Data(format!(
                    "{}: line {lineno}: label `{}` not in manifest {m:?}",
                    path.display(),
                    parsed.label
                )));
            }
        }
        examples.push(RawExample {
            text,
            target,
            label: parsed.label,
        });
    }
    let labels = match manifest {
        Some(m) => m.to_vec(),
        None => examples
            .iter()
            .map(|e| e.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    Dataset::new(split, examples, labels)
}

/// Inverse of [`load_jsonl`] for already-preprocessed examples.
pub fn write_jsonl(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_jsonl(data)?).map_err(|e| Error::io(path, e))
}

pub fn to_jsonl(data: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for ex in &data.examples {
        serde_json::to_writer(&mut buf, ex)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// One label per line; blank lines ignored.
pub fn read_label_manifest(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels: Vec<String> = body
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    let distinct: BTreeSet<&String> = labels.iter().collect();
    if labels.is_empty() || distinct.len() != labels.len() {
        return Err(Error::Data(format!(
            "{}: manifest must list distinct labels",
            path.display()
        )));
    }
    Ok(labels)
}

pub fn write_label_manifest(labels: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for l in labels {
        writeln!(f, "{l}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
