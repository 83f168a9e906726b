use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{batch_loss, predict, Checkpoint, ForwardMode, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::{adam_step, AdamState, Tape};
use crate::scalar::Scalar;
use crate::tamatrix::TargetAwarenessConfig;
use crate::textdata::{build_vocab, Dataset, TargetMode, TokenizedExample, Vocabulary};
use crate::traineval::metrics::{score_predictions, Convention, EvalReport};

const EVAL_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seeds parameter init, shuffling and dropout.
    pub seed: u64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub convention: Convention,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            patience: 5,
            convention: Convention::AllLabels,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("train.epochs, batch_size and patience must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("train.lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Mean training loss of the initial parameters, no dropout.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub stopped_early: bool,
}

impl History {
    /// `epoch,loss,val_f1` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.epochs {
            out.serialize(r).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::Data(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Vec<EpochRecord>> {
        csv::Reader::from_reader(r)
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("history csv: {e}"))
}

/// Raw train/validation/test splits sharing one label set.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Splits laid out for the model, with the vocabulary built from training data.
#[derive(Clone, Debug)]
pub struct EncodedSplits {
    pub vocab: Vocabulary,
    pub labels: Vec<String>,
    pub train: Vec<TokenizedExample>,
    pub val: Vec<TokenizedExample>,
    pub test: Vec<TokenizedExample>,
}

fn check_same_labels(a: &Dataset, b: &Dataset) -> Result<()> {
    if a.labels != b.labels {
        return Err(Error::Data(format!(
            "label sets differ: {} has {:?}, {} has {:?}",
            a.split, a.labels, b.split, b.labels
        )));
    }
    Ok(())
}

fn check_non_empty(d: &Dataset) -> Result<()> {
    if d.is_empty() {
        return Err(Error::Data(format!("{} split is empty", d.split)));
    }
    Ok(())
}

impl Splits {
    pub fn new(train: Dataset, val: Dataset, test: Dataset) -> Result<Self> {
        for d in [&train, &val, &test] {
            check_non_empty(d)?;
        }
        check_same_labels(&train, &val)?;
        check_same_labels(&train, &test)?;
        Ok(Splits { train, val, test })
    }

    /// The vocabulary always comes from the unmasked training split so every
    /// target mode sees the same model shape.
    pub fn encode(&self, max_len: usize, mode: TargetMode) -> Result<EncodedSplits> {
        let vocab = build_vocab(&self.train);
        Ok(EncodedSplits {
            train: self.train.encode(&vocab, max_len, mode)?,
            val: self.val.encode(&vocab, max_len, mode)?,
            test: self.test.encode(&vocab, max_len, mode)?,
            labels: self.train.labels.clone(),
            vocab,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainedModel<T> {
    /// Parameters of the best validation epoch.
    pub checkpoint: Checkpoint<T>,
    pub history: History,
}

/// Eval-mode predictions, batched to bound tape size.
pub fn predict_all<T: Scalar>(
    params: &ModelParams<T>,
    ta: &TargetAwarenessConfig,
    data: &[TokenizedExample],
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(EVAL_CHUNK) {
        out.extend(predict(chunk, params, ta)?);
    }
    Ok(out)
}

/// Scores already-encoded examples; their `label_id`s index `labels`.
pub fn evaluate_encoded<T: Scalar>(
    params: &ModelParams<T>,
    ta: &TargetAwarenessConfig,
    data: &[TokenizedExample],
    labels: &[String],
    convention: Convention,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let pred = predict_all(params, ta, data)?;
    let gold: Vec<usize> = data.iter().map(|e| e.label_id).collect();
    score_predictions(&gold, &pred, labels, convention)
}

/// Scores a trained model on `test`. Labels are matched to the checkpoint by
/// name; a test label the model never saw is a data error.
pub fn evaluate<T: Scalar>(
    model: &Checkpoint<T>,
    ta: &TargetAwarenessConfig,
    test: &Dataset,
    convention: Convention,
) -> Result<EvalReport> {
    check_non_empty(test)?;
    let remapped = Dataset::new(test.split.clone(), test.examples.clone(), model.labels.clone())?;
    let data = remapped.encode(&model.vocab, model.params.config().max_len, TargetMode::Original)?;
    evaluate_encoded(&model.params, ta, &data, &model.labels, convention)
}

fn mean_loss<T: Scalar>(
    params: &ModelParams<T>,
    ta: &TargetAwarenessConfig,
    data: &[TokenizedExample],
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in data.chunks(EVAL_CHUNK) {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape, false);
        let loss = batch_loss(&mut tape, params, &vars, chunk, ta, &mut ForwardMode::Eval)?;
        total += tape.value(loss).data()[0].as_f64() * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Trains on the raw datasets, building the vocabulary from `train`.
pub fn train<T: Scalar>(
    train: &Dataset,
    val: &Dataset,
    model_cfg: &ModelConfig,
    ta: &TargetAwarenessConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel<T>> {
    check_non_empty(train)?;
    check_non_empty(val)?;
    check_same_labels(train, val)?;
    let vocab = build_vocab(train);
    let tr = train.encode(&vocab, model_cfg.max_len, TargetMode::Original)?;
    let va = val.encode(&vocab, model_cfg.max_len, TargetMode::Original)?;
    train_encoded(&vocab, &train.labels, &tr, &va, model_cfg, ta, cfg)
}

/// Adam on shuffled minibatches, keeping the parameters with the best
/// validation macro-F1. `model_cfg.vocab_size`, `n_labels` and `seed` are
/// replaced by the vocabulary size, label count and `cfg.seed`.
pub fn train_encoded<T: Scalar>(
    vocab: &Vocabulary,
    labels: &[String],
    train: &[TokenizedExample],
    val: &[TokenizedExample],
    model_cfg: &ModelConfig,
    ta: &TargetAwarenessConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation data must be non-empty".into()));
    }
    cfg.convention.label_subset(labels)?;
    let model_cfg = ModelConfig {
        vocab_size: vocab.len(),
        n_labels: labels.len(),
        seed: cfg.seed,
        ..model_cfg.clone()
    };
    ta.validate_for(model_cfg.n_layers, model_cfg.n_heads)?;

    let mut params = ModelParams::<T>::init(&model_cfg)?;
    let mut adam = AdamState::new(T::lit(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial_loss = mean_loss(&params, ta, train)?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = params.clone();
    let mut history = History {
        initial_loss,
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_val_f1: f64::NEG_INFINITY,
        stopped_early: false,
    };
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<TokenizedExample> = idx.iter().map(|&i| train[i].clone()).collect();
            let mut tape = Tape::new();
            let vars = params.register(&mut tape, true);
            let loss = batch_loss(&mut tape, &params, &vars, &batch, ta, &mut ForwardMode::Train { rng: &mut rng })?;
            let lv = tape.value(loss).data()[0].as_f64();
            if !lv.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss at epoch {epoch}")));
            }
            loss_sum += lv * batch.len() as f64;
            tape.backward(loss)?;
            params.collect_grads(&tape, &vars)?;
            adam_step(&mut params.tensors_mut(), &mut adam)?;
        }
        let val_f1 = evaluate_encoded(&params, ta, val, labels, cfg.convention)?.macro_f1;
        history.epochs.push(EpochRecord {
            epoch,
            loss: loss_sum / train.len() as f64,
            val_f1,
        });
        if val_f1 > history.best_val_f1 {
            history.best_val_f1 = val_f1;
            history.best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience && epoch < cfg.epochs {
                history.stopped_early = true;
                break;
            }
        }
    }
    for t in best.tensors_mut() {
        t.clear_grad();
    }
    Ok(TrainedModel {
        checkpoint: Checkpoint {
            params: best,
            labels: labels.to_vec(),
            vocab: vocab.clone(),
            ta: ta.clone(),
        },
        history,
    })
}
