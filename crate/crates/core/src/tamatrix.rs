//! Target-awareness bias: a 0/1 matrix whose only nonzero block covers the
//! target tokens, scaled by `alpha` and added to the scaled attention logits
//! before the softmax.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::textdata::TokenizedExample;

/// Logit written into padded key columns. Its softmax weight underflows to
/// exactly zero against any realistic row maximum.
pub const PAD_LOGIT: f64 = -1e9;

/// The α grid searched when tuning the bias weight.
pub const ALPHA_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Attention sites that receive the bias.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum Placement {
    #[default]
    All,
    Sites(BTreeSet<(usize, usize)>),
}

impl Placement {
    pub fn contains(&self, layer: usize, head: usize) -> bool {
        match self {
            Placement::All => true,
            Placement::Sites(s) => s.contains(&(layer, head)),
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::All => f.write_str("all"),
            Placement::Sites(s) => {
                let parts: Vec<String> = s.iter().map(|(l, h)| format!("{l}:{h}")).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl FromStr for Placement {
    type Err = Error;

    /// `all`, or a comma-separated list of `layer:head` pairs.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(Placement::All);
        }
        let mut sites = BTreeSet::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (l, h) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("placement entry `{part}` is not layer:head")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("placement entry `{part}` is not layer:head")))
            };
            sites.insert((parse(l)?, parse(h)?));
        }
        if sites.is_empty() {
            return Err(Error::Config("placement lists no sites".into()));
        }
        Ok(Placement::Sites(sites))
    }
}

impl Serialize for Placement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Placement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetAwarenessConfig {
    pub alpha: f64,
    pub placement: Placement,
    /// Keep the bias when evaluating; training always applies it.
    pub enabled_at_inference: bool,
}

impl Default for TargetAwarenessConfig {
    fn default() -> Self {
        TargetAwarenessConfig {
            alpha: 0.0,
            placement: Placement::All,
            enabled_at_inference: true,
        }
    }
}

impl TargetAwarenessConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        let cfg = TargetAwarenessConfig {
            alpha,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The unmodified baseline: α = 0 everywhere.
    pub fn baseline() -> Self {
        TargetAwarenessConfig::default()
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        TargetAwarenessConfig {
            alpha,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("ta.alpha must be finite and >= 0, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn validate_for(&self, n_layers: usize, n_heads: usize) -> Result<()> {
        self.validate()?;
        if let Placement::Sites(sites) = &self.placement {
            if let Some((l, h)) = sites.iter().find(|(l, h)| *l >= n_layers || *h >= n_heads) {
                return Err(Error::Config(format!(
                    "ta.placement site {l}:{h} outside model of {n_layers} layers x {n_heads} heads"
                )));
            }
        }
        Ok(())
    }

    /// Bias weight at one attention site.
    pub fn alpha_at(&self, layer: usize, head: usize) -> f64 {
        if self.placement.contains(layer, head) {
            self.alpha
        } else {
            0.0
        }
    }
}

/// Target block of one example, realized densely only on demand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetAwarenessBias {
    seq: usize,
    block: Range<usize>,
}

impl TargetAwarenessBias {
    pub fn new(seq: usize, block: Range<usize>) -> Result<Self> {
        if block.start > block.end || block.end > seq {
            return Err(Error::dim("target_awareness_bias", &[seq], &[block.start, block.end]));
        }
        Ok(TargetAwarenessBias { seq, block })
    }

    pub fn seq_len(&self) -> usize {
        self.seq
    }

    pub fn block(&self) -> Range<usize> {
        self.block.clone()
    }

    pub fn is_empty(&self) -> bool {
        self.block.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.block.contains(&row) && self.block.contains(&col)
    }

    pub fn realize<T: Scalar>(&self) -> Tensor<T> {
        let n = self.seq;
        let mut data = vec![T::zero(); n * n];
        for i in self.block.clone() {
            for j in self.block.clone() {
                data[i * n + j] = T::one();
            }
        }
        Tensor::new(vec![n, n], data).expect("square shape")
    }
}

/// The target block is exactly the target span, which never includes the
/// surrounding `[SEP]`s, `[CLS]`, or padding.
pub fn build_bias(example: &TokenizedExample) -> TargetAwarenessBias {
    TargetAwarenessBias {
        seq: example.seq_len(),
        block: example.target_span.clone(),
    }
}

/// `scaled_logits + alpha·M`, then padded key columns forced to [`PAD_LOGIT`].
///
/// `scaled_logits` must already be divided by `sqrt(d_k)`. The bias is a
/// constant, so gradients flow through the logits only.
pub fn apply_bias<T: Scalar>(
    tape: &mut Tape<T>,
    scaled_logits: Var,
    bias: &TargetAwarenessBias,
    alpha: T,
    pad_mask: &[bool],
) -> Result<Var> {
    let shape = tape.value(scaled_logits).shape().to_vec();
    if shape != [bias.seq, bias.seq] || pad_mask.len() != bias.seq {
        return Err(Error::dim("apply_bias", &shape, &[bias.seq, pad_mask.len()]));
    }
    let biased = tape.add_block(scaled_logits, bias.block(), bias.block(), alpha)?;
    tape.mask_cols(biased, pad_mask, T::lit(PAD_LOGIT))
}

/// Σ over target columns of one attention row.
pub fn target_mass<T: Scalar>(row: &[T], target_span: &Range<usize>) -> T {
    row[target_span.clone()].iter().copied().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textdata::assemble;

    #[test]
    fn block_at_span() {
        let ex = assemble(&[10], &[12, 13], 8).unwrap();
        assert_eq!(ex.target_span, 3..5);
        let m = build_bias(&ex).realize::<f64>();
        for i in 0..8 {
            for j in 0..8 {
                let want = if (3..5).contains(&i) && (3..5).contains(&j) { 1.0 } else { 0.0 };
                assert_eq!(m.at(i, j), want, "({i},{j})");
            }
        }
    }

    #[test]
    fn empty_span_is_zero() {
        let ex = assemble(&[10, 11], &[], 8).unwrap();
        let b = build_bias(&ex);
        assert!(b.is_empty());
        assert!(b.realize::<f32>().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn alpha_zero_is_identity() {
        let mut tape = Tape::<f64>::new();
        let data: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = tape.constant(Tensor::new(vec![8, 8], data.clone()).unwrap());
        let b = TargetAwarenessBias::new(8, 3..5).unwrap();
        let y = apply_bias(&mut tape, x, &b, 0.0, &[false; 8]).unwrap();
        assert_eq!(tape.value(y).data(), &data[..]);
    }

    #[test]
    fn half_alpha_inside_block_only() {
        let mut tape = Tape::<f64>::new();
        let data: Vec<f64> = (0..64).map(|i| i as f64 * 0.1).collect();
        let x = tape.constant(Tensor::new(vec![8, 8], data).unwrap());
        let b = TargetAwarenessBias::new(8, 3..5).unwrap();
        let y = apply_bias(&mut tape, x, &b, 0.5, &[false; 8]).unwrap();
        let (xi, yi) = (tape.value(x), tape.value(y));
        assert_eq!(yi.at(3, 4) - xi.at(3, 4), 0.5);
        assert_eq!(yi.at(0, 1) - xi.at(0, 1), 0.0);
        assert_eq!(yi.at(3, 2) - xi.at(3, 2), 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(vec![6, 6]).unwrap());
        let b = TargetAwarenessBias::new(8, 3..5).unwrap();
        assert!(matches!(
            apply_bias(&mut tape, x, &b, 1.0, &[false; 8]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn placement_parses_and_prints() {
        let p: Placement = "0:1, 1:3".parse().unwrap();
        assert!(p.contains(0, 1) && p.contains(1, 3) && !p.contains(0, 0));
        assert_eq!(p.to_string(), "0:1,1:3");
        assert_eq!("ALL".parse::<Placement>().unwrap(), Placement::All);
        assert!("0-1".parse::<Placement>().is_err());
    }

    #[test]
    fn placement_bounds_checked() {
        let mut cfg = TargetAwarenessConfig::new(0.5).unwrap();
        cfg.placement = "2:0".parse().unwrap();
        assert!(cfg.validate_for(2, 4).is_err());
        assert!(cfg.validate_for(3, 4).is_ok());
        assert_eq!(cfg.alpha_at(2, 0), 0.5);
        assert_eq!(cfg.alpha_at(0, 0), 0.0);
    }

    #[test]
    fn negative_alpha_rejected() {
        assert!(TargetAwarenessConfig::new(-0.1).is_err());
        assert!(TargetAwarenessConfig::new(f64::NAN).is_err());
    }
}
