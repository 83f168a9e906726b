use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which labels a macro-F1 averages over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Mean of the FAVOR and AGAINST F1 only.
    FavorAgainst,
    /// Mean over every label in the label set.
    AllLabels,
    /// Mean over exactly three labels; other label counts are rejected.
    ThreeLabel,
}

impl Convention {
    pub const ALL: [Convention; 3] = [Convention::FavorAgainst, Convention::AllLabels, Convention::ThreeLabel];

    pub fn name(self) -> &'static str {
        match self {
            Convention::FavorAgainst => "favor_against",
            Convention::AllLabels => "all_labels",
            Convention::ThreeLabel => "three_label",
        }
    }

    /// Label ids to average, in label-set order.
    pub fn label_subset(self, labels: &[String]) -> Result<Vec<usize>> {
        match self {
            Convention::AllLabels => Ok((0..labels.len()).collect()),
            Convention::ThreeLabel => {
                if labels.len() != 3 {
                    return Err(Error::Config(format!(
                        "three_label convention needs exactly 3 labels, dataset has {:?}",
                        labels
                    )));
                }
                Ok(vec![0, 1, 2])
            }
            Convention::FavorAgainst => {
                let find = |name: &str| {
                    labels.iter().position(|l| l.eq_ignore_ascii_case(name)).ok_or_else(|| {
                        Error::Config(format!(
                            "favor_against convention references label `{name}` absent from {labels:?}"
                        ))
                    })
                };
                let mut ids = vec![find("favor")?, find("against")?];
                ids.sort_unstable();
                Ok(ids)
            }
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Convention::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown metric convention `{s}`")))
    }
}

/// `counts[gold][pred]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_pairs(gold: &[usize], pred: &[usize], n_labels: usize) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::dim("confusion_matrix", &[gold.len()], &[pred.len()]));
        }
        let mut counts = vec![vec![0; n_labels]; n_labels];
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= n_labels || p >= n_labels {
                return Err(Error::Data(format!("label id {} outside {n_labels} labels", g.max(p))));
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn n_labels(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, l: usize) -> usize {
        self.counts[l][l]
    }

    pub fn false_positives(&self, l: usize) -> usize {
        (0..self.n_labels()).filter(|&g| g != l).map(|g| self.counts[g][l]).sum()
    }

    pub fn false_negatives(&self, l: usize) -> usize {
        (0..self.n_labels()).filter(|&p| p != l).map(|p| self.counts[l][p]).sum()
    }

    fn ratio<Q: Num + FromPrimitive>(num: usize, den: usize) -> Q {
        if den == 0 {
            return Q::zero();
        }
        let q = |n: usize| Q::from_usize(n).expect("count representable");
        q(num) / q(den)
    }

    /// Precision in any exact or floating field; 0 when nothing was predicted.
    pub fn precision<Q: Num + FromPrimitive>(&self, l: usize) -> Q {
        let tp = self.true_positives(l);
        Self::ratio(tp, tp + self.false_positives(l))
    }

    pub fn recall<Q: Num + FromPrimitive>(&self, l: usize) -> Q {
        let tp = self.true_positives(l);
        Self::ratio(tp, tp + self.false_negatives(l))
    }

    /// `2·tp / (2·tp + fp + fn)`, 0 when the label never occurs nor is predicted.
    pub fn f1<Q: Num + FromPrimitive>(&self, l: usize) -> Q {
        let tp = self.true_positives(l);
        Self::ratio(2 * tp, 2 * tp + self.false_positives(l) + self.false_negatives(l))
    }

    pub fn macro_f1<Q: Num + FromPrimitive + Clone>(&self, subset: &[usize]) -> Q {
        let n = Q::from_usize(subset.len().max(1)).expect("count representable");
        subset.iter().fold(Q::zero(), |acc, &l| acc + self.f1::<Q>(l)) / n
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub convention: Convention,
    pub labels: Vec<String>,
    pub averaged_labels: Vec<String>,
    pub per_label: Vec<LabelScore>,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    pub n: usize,
    /// Resolved settings of the run that produced the report.
    pub config: BTreeMap<String, String>,
}

/// Scores predicted against gold label ids under a macro-F1 convention.
pub fn score_predictions(gold: &[usize], pred: &[usize], labels: &[String], convention: Convention) -> Result<EvalReport> {
    let subset = convention.label_subset(labels)?;
    let cm = ConfusionMatrix::from_pairs(gold, pred, labels.len())?;
    let per_label = labels
        .iter()
        .enumerate()
        .map(|(l, name)| LabelScore {
            label: name.clone(),
            precision: cm.precision(l),
            recall: cm.recall(l),
            f1: cm.f1(l),
            support: cm.counts()[l].iter().sum(),
        })
        .collect();
    Ok(EvalReport {
        convention,
        labels: labels.to_vec(),
        averaged_labels: subset.iter().map(|&l| labels[l].clone()).collect(),
        per_label,
        macro_f1: cm.macro_f1(&subset),
        n: cm.total(),
        confusion: cm,
        config: BTreeMap::new(),
    })
}
