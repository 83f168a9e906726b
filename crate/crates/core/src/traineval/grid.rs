use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::encoder::ModelConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tamatrix::TargetAwarenessConfig;
use crate::textdata::TargetMode;
use crate::traineval::metrics::EvalReport;
use crate::traineval::train::{evaluate_encoded, train_encoded, EncodedSplits, Splits, TrainConfig, TrainedModel};

/// One candidate α, trained and scored on demand.
pub trait AlphaTrial {
    /// Validation macro-F1 of the model trained with `alpha`.
    fn validate(&mut self, alpha: f64) -> Result<f64>;
    /// Test macro-F1 of that same model; only asked for the winner.
    fn test(&mut self, alpha: f64) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub alphas: Vec<f64>,
    pub val_f1: Vec<f64>,
    pub chosen_alpha: f64,
    pub test_f1: f64,
}

#[derive(Serialize)]
struct GridRow {
    alpha: f64,
    val_f1: f64,
    chosen: bool,
}

impl GridResult {
    /// `alpha,val_f1,chosen` rows in grid order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for (&alpha, &val_f1) in self.alphas.iter().zip(&self.val_f1) {
            out.serialize(GridRow {
                alpha,
                val_f1,
                chosen: alpha == self.chosen_alpha,
            })
            .map_err(|e| Error::Data(format!("grid csv: {e}")))?;
        }
        out.flush().map_err(|e| Error::Data(e.to_string()))
    }
}

/// Index of the highest score; equal scores go to the smallest α.
pub fn select_alpha(alphas: &[f64], scores: &[f64]) -> Result<usize> {
    if alphas.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    if alphas.len() != scores.len() {
        return Err(Error::dim("select_alpha", &[alphas.len()], &[scores.len()]));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Numeric(format!("validation score for alpha {} is NaN", alphas[i])));
    }
    let mut best = 0;
    for i in 1..alphas.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && alphas[i] < alphas[best]) {
            best = i;
        }
    }
    Ok(best)
}

/// Asks `trial` for every α's validation score, then the winner's test score.
pub fn grid_search_with<A: AlphaTrial + ?Sized>(trial: &mut A, alphas: &[f64]) -> Result<GridResult> {
    if alphas.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    for &a in alphas {
        TargetAwarenessConfig::new(a)?;
    }
    let val_f1 = alphas.iter().map(|&a| trial.validate(a)).collect::<Result<Vec<_>>>()?;
    let best = select_alpha(alphas, &val_f1)?;
    let chosen_alpha = alphas[best];
    Ok(GridResult {
        test_f1: trial.test(chosen_alpha)?,
        alphas: alphas.to_vec(),
        val_f1,
        chosen_alpha,
    })
}

struct TrainingTrial<'a, T> {
    data: &'a EncodedSplits,
    model_cfg: &'a ModelConfig,
    ta: &'a TargetAwarenessConfig,
    cfg: &'a TrainConfig,
    trained: Vec<(f64, TrainedModel<T>)>,
    test_report: Option<EvalReport>,
}

impl<T: Scalar> TrainingTrial<'_, T> {
    fn model(&self, alpha: f64) -> Result<&TrainedModel<T>> {
        self.trained
            .iter()
            .find(|(a, _)| *a == alpha)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Usage(format!("alpha {alpha} was never trained")))
    }
}

impl<T: Scalar> AlphaTrial for TrainingTrial<'_, T> {
    fn validate(&mut self, alpha: f64) -> Result<f64> {
        let d = self.data;
        let ta = self.ta.with_alpha(alpha);
        let m = train_encoded::<T>(&d.vocab, &d.labels, &d.train, &d.val, self.model_cfg, &ta, self.cfg)?;
        let score = m.history.best_val_f1;
        self.trained.push((alpha, m));
        Ok(score)
    }

    fn test(&mut self, alpha: f64) -> Result<f64> {
        let m = self.model(alpha)?;
        let ck = &m.checkpoint;
        let report = evaluate_encoded(&ck.params, &ck.ta, &self.data.test, &self.data.labels, self.cfg.convention)?;
        let f1 = report.macro_f1;
        self.test_report = Some(report);
        Ok(f1)
    }
}

#[derive(Clone, Debug)]
pub struct GridOutcome<T> {
    pub result: GridResult,
    /// The model trained with the chosen α.
    pub best: TrainedModel<T>,
    pub test_report: EvalReport,
}

/// One full training per α with the same seed; α comes from the template's
/// placement and inference settings with only `alpha` varied.
pub fn grid_search_alpha<T: Scalar>(
    splits: &Splits,
    model_cfg: &ModelConfig,
    ta_template: &TargetAwarenessConfig,
    cfg: &TrainConfig,
    alphas: &[f64],
) -> Result<GridOutcome<T>> {
    let data = splits.encode(model_cfg.max_len, TargetMode::Original)?;
    let mut trial = TrainingTrial::<T> {
        data: &data,
        model_cfg,
        ta: ta_template,
        cfg,
        trained: Vec::with_capacity(alphas.len()),
        test_report: None,
    };
    let result = grid_search_with(&mut trial, alphas)?;
    let best = trial.model(result.chosen_alpha)?.clone();
    let test_report = trial.test_report.take().expect("winner was tested");
    Ok(GridOutcome {
        result,
        best,
        test_report,
    })
}
