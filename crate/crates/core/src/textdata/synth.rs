//! Seeded synthetic stance corpus whose labels depend on the target.
//!
//! Every text carries exactly one stance word among distractors. The label is
//! fixed by the (stance word, target) pair: each target rotates the shared
//! stance lexicon, so the same word means different things for different
//! targets and the text alone cannot determine the label.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::textdata::dataset::{Dataset, RawExample};

pub const SYNTH_LABELS: [&str; 3] = ["AGAINST", "FAVOR", "NONE"];
const STANCE_WORDS_PER_LABEL: usize = 2;
const MIN_TEXT_LEN: usize = 4;
const MAX_TEXT_LEN: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_targets: usize,
    /// Approximate number of distinct word types; distractors fill the rest.
    pub vocab_size: usize,
}

/// The generator's labeling rule, usable as an oracle classifier.
#[derive(Clone, Debug)]
pub struct SynthLexicon {
    pub targets: Vec<String>,
    pub stance_words: Vec<String>,
    rule: BTreeMap<(String, String), String>,
}

impl SynthLexicon {
    pub fn label_for(&self, stance_word: &str, target: &str) -> Option<&str> {
        self.rule
            .get(&(stance_word.to_string(), target.to_string()))
            .map(String::as_str)
    }

    pub fn stance_word_in<'a>(&self, text: &'a str) -> Option<&'a str> {
        text.split_whitespace().find(|w| self.stance_words.iter().any(|s| s == w))
    }

    /// Labels an example by reading its stance word and target.
    pub fn classify(&self, ex: &RawExample) -> Option<&str> {
        self.label_for(self.stance_word_in(&ex.text)?, &ex.target)
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub lexicon: SynthLexicon,
}

fn target_name(k: usize) -> String {
    if k % 2 == 0 {
        format!("topic{k}")
    } else {
        format!("topic{k} issue{k}")
    }
}

pub fn synth_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    if spec.n_train == 0 || spec.n_val == 0 || spec.n_test == 0 || spec.n_targets == 0 {
        return Err(Error::Config("synthetic corpus sizes must be at least 1".into()));
    }
    let c = SYNTH_LABELS.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let targets: Vec<String> = (0..spec.n_targets).map(target_name).collect();
    let target_tokens: usize = targets.iter().map(|t| t.split(' ').count()).sum();
    let mut stance_words: Vec<String> = (0..c * STANCE_WORDS_PER_LABEL).map(|i| format!("stance{i}")).collect();
    stance_words.shuffle(&mut rng);
    let n_distractors = spec
        .vocab_size
        .saturating_sub(stance_words.len() + target_tokens)
        .max(8);
    let distractors: Vec<String> = (0..n_distractors).map(|i| format!("w{i}")).collect();

    // word i carries base label i mod c; target k shifts it by k mod c.
    let mut rule = BTreeMap::new();
    let mut by_label: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); c]; spec.n_targets];
    for (k, t) in targets.iter().enumerate() {
        for (i, w) in stance_words.iter().enumerate() {
            let label = (i % c + k % c) % c;
            rule.insert((w.clone(), t.clone()), SYNTH_LABELS[label].to_string());
            by_label[k][label].push(i);
        }
    }

    let mut make = |n: usize, split: &str| -> Result<Dataset> {
        let mut examples = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.gen_range(0..spec.n_targets);
            let label = rng.gen_range(0..c);
            let word = *by_label[k][label].choose(&mut rng).expect("every label has stance words");
            let len = rng.gen_range(MIN_TEXT_LEN..=MAX_TEXT_LEN);
            let slot = rng.gen_range(0..len);
            let words: Vec<&str> = (0..len)
                .map(|j| {
                    if j == slot {
                        stance_words[word].as_str()
                    } else {
                        distractors.choose(&mut rng).expect("non-empty").as_str()
                    }
                })
                .collect();
            examples.push(RawExample {
                text: words.join(" "),
                target: targets[k].clone(),
                label: SYNTH_LABELS[label].to_string(),
            });
        }
        Dataset::new(split, examples, SYNTH_LABELS.iter().map(|s| s.to_string()).collect())
    };

    let train = make(spec.n_train, "train")?;
    let val = make(spec.n_val, "val")?;
    let test = make(spec.n_test, "test")?;
    Ok(SynthCorpus {
        train,
        val,
        test,
        lexicon: SynthLexicon {
            targets,
            stance_words,
            rule,
        },
    })
}
