//! Training loop, macro-F1 evaluation, α grid search and the three-arm
//! target ablation.

mod ablation;
mod grid;
mod metrics;
mod train;

pub use ablation::{median, run_ablation, AblationReport, Arm, ArmResult, SeedRun};
pub use grid::{grid_search_alpha, grid_search_with, select_alpha, AlphaTrial, GridOutcome, GridResult};
pub use metrics::{score_predictions, ConfusionMatrix, Convention, EvalReport, LabelScore};
pub use train::{
    evaluate, evaluate_encoded, predict_all, train, train_encoded, EncodedSplits, EpochRecord, History, Splits,
    TrainConfig, TrainedModel,
};
