use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::ModelConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tamatrix::TargetAwarenessConfig;
use crate::textdata::TargetMode;
use crate::traineval::metrics::EvalReport;
use crate::traineval::train::{evaluate_encoded, train_encoded, EncodedSplits, Splits, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    TargetsOriginal,
    TargetsMasked,
    Stanceformer,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::TargetsOriginal, Arm::TargetsMasked, Arm::Stanceformer];

    pub fn name(self) -> &'static str {
        match self {
            Arm::TargetsOriginal => "targets_original",
            Arm::TargetsMasked => "targets_masked",
            Arm::Stanceformer => "stanceformer",
        }
    }

    pub fn target_mode(self) -> TargetMode {
        match self {
            Arm::TargetsMasked => TargetMode::Masked,
            _ => TargetMode::Original,
        }
    }

    pub fn alpha(self, stanceformer_alpha: f64) -> f64 {
        match self {
            Arm::Stanceformer => stanceformer_alpha,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub macro_f1: f64,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: Arm,
    pub target_mode: TargetMode,
    pub alpha: f64,
    /// Hash of every setting except the arm's own knob and the seed.
    pub shared_config_hash: String,
    pub runs: Vec<SeedRun>,
    pub mean: f64,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub arms: Vec<ArmResult>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

#[derive(Serialize)]
struct SharedSettings<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    placement: String,
    enabled_at_inference: bool,
}

fn shared_hash(model: &ModelConfig, train: &TrainConfig, ta: &TargetAwarenessConfig) -> String {
    let s = SharedSettings {
        model: &ModelConfig { seed: 0, ..model.clone() },
        train: &TrainConfig { seed: 0, ..train.clone() },
        placement: ta.placement.to_string(),
        enabled_at_inference: ta.enabled_at_inference,
    };
    hex::encode(Sha256::digest(serde_json::to_vec(&s).expect("settings serialize")))
}

/// Three arms per seed: real targets at α = 0, masked targets at α = 0, and
/// real targets at `ta.alpha`. Everything else is shared.
pub fn run_ablation<T: Scalar>(
    splits: &Splits,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    ta: &TargetAwarenessConfig,
    seeds: &[u64],
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    ta.validate()?;
    let original = splits.encode(model_cfg.max_len, TargetMode::Original)?;
    let masked = splits.encode(model_cfg.max_len, TargetMode::Masked)?;
    let mut arms = Vec::with_capacity(3);
    for arm in Arm::ALL {
        let data: &EncodedSplits = match arm.target_mode() {
            TargetMode::Original => &original,
            TargetMode::Masked => &masked,
        };
        let arm_ta = ta.with_alpha(arm.alpha(ta.alpha));
        let mut runs = Vec::with_capacity(seeds.len());
        let mut hash = String::new();
        for &seed in seeds {
            let run_cfg = TrainConfig { seed, ..cfg.clone() };
            let m = train_encoded::<T>(&data.vocab, &data.labels, &data.train, &data.val, model_cfg, &arm_ta, &run_cfg)?;
            let ck = &m.checkpoint;
            hash = shared_hash(ck.params.config(), &run_cfg, &arm_ta);
            let report = evaluate_encoded(&ck.params, &arm_ta, &data.test, &data.labels, cfg.convention)?;
            runs.push(SeedRun {
                seed,
                macro_f1: report.macro_f1,
                report,
            });
        }
        let f1: Vec<f64> = runs.iter().map(|r| r.macro_f1).collect();
        arms.push(ArmResult {
            arm,
            target_mode: arm.target_mode(),
            alpha: arm_ta.alpha,
            shared_config_hash: hash,
            mean: f1.iter().sum::<f64>() / f1.len() as f64,
            median: median(&f1),
            runs,
        });
    }
    Ok(AblationReport {
        seeds: seeds.to_vec(),
        alpha: ta.alpha,
        arms,
    })
}

impl AblationReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.arm == arm)
    }

    /// Table of per-seed test macro-F1 with mean and median, one row per arm.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(|x| format!("seed {x}")).collect();
        let _ = writeln!(s, "| arm | target input | alpha | {} | mean | median |", seeds.join(" | "));
        let _ = writeln!(s, "|---|---|---|{}---|---|", "---|".repeat(self.seeds.len()));
        for a in &self.arms {
            let target = match a.target_mode {
                TargetMode::Original => "original",
                TargetMode::Masked => "masked",
            };
            let per: Vec<String> = a.runs.iter().map(|r| format!("{:.4}", r.macro_f1)).collect();
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {:.4} | {:.4} |",
                a.arm.name(),
                target,
                a.alpha,
                per.join(" | "),
                a.mean,
                a.median
            );
        }
        s
    }
}
