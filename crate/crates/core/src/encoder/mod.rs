//! Small transformer encoder classifier whose self-attention accepts the
//! target-awareness bias.

mod checkpoint;
mod config;
mod model;
mod param_loss;
mod params;

pub use checkpoint::Checkpoint;
pub use config::ModelConfig;
pub use model::{
    attend, attention_head, attention_maps, batch_loss, encode, forward_logits, predict, AttentionMap, ForwardMode,
    HeadVars,
};
pub use param_loss::ParamLoss;
pub use params::{ModelParams, ParamVars};
