use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::scalar::Scalar;
use crate::tamatrix::TargetAwarenessConfig;
use crate::textdata::Vocabulary;

const FORMAT: &str = "stanceformer-checkpoint/1";

#[derive(Serialize, Deserialize)]
struct NamedTensor<T> {
    name: String,
    shape: Vec<usize>,
    data: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct Container<T> {
    format: String,
    config_hash: String,
    config: ModelConfig,
    labels: Vec<String>,
    vocab: Vocabulary,
    ta: TargetAwarenessConfig,
    params: Vec<NamedTensor<T>>,
}

/// Everything needed to run a trained model on new text.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub labels: Vec<String>,
    pub vocab: Vocabulary,
    pub ta: TargetAwarenessConfig,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let config = self.params.config().clone();
        let c = Container {
            format: FORMAT.to_string(),
            config_hash: config.hash(),
            config,
            labels: self.labels.clone(),
            vocab: self.vocab.clone(),
            ta: self.ta.clone(),
            params: self
                .params
                .named()
                .map(|(n, t)| NamedTensor {
                    name: n.to_string(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_vec(&c)?)
    }

    /// Parses a container and checks format tag, config hash, label count,
    /// vocabulary size and every parameter's name and shape.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let c: Container<T> = serde_json::from_slice(bytes)?;
        if c.format != FORMAT {
            return Err(Error::Data(format!("unsupported checkpoint format `{}`", c.format)));
        }
        if c.config.hash() != c.config_hash {
            return Err(Error::Data("checkpoint config hash mismatch".into()));
        }
        if c.labels.len() != c.config.n_labels || c.vocab.len() != c.config.vocab_size {
            return Err(Error::Data("checkpoint labels/vocabulary disagree with config".into()));
        }
        c.ta.validate_for(c.config.n_layers, c.config.n_heads)?;
        let named = c
            .params
            .into_iter()
            .map(|p| Ok((p.name, Tensor::new(p.shape, p.data)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Checkpoint {
            params: ModelParams::from_named(&c.config, named)?,
            labels: c.labels,
            vocab: c.vocab,
            ta: c.ta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&bytes)
    }
}
