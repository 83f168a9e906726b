use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::textdata::MIN_SEQ_LEN;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub n_labels: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 128,
            vocab_size: 8,
            max_len: 48,
            n_labels: 3,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Per-head key/query width.
    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("model.n_layers, n_heads, d_model and d_ff must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!(
                "model.d_model {} not divisible by model.n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_len < MIN_SEQ_LEN {
            return bad(format!("model.max_len {} below {MIN_SEQ_LEN}", self.max_len));
        }
        if self.vocab_size < 4 {
            return bad("vocab_size must cover the four special tokens".into());
        }
        if self.n_labels < 2 {
            return bad(format!("need at least 2 labels, got {}", self.n_labels));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("model.dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
