//! Post-layer-norm transformer encoder with per-example target-awareness
//! bias in every attention site, pooled at `[CLS]`.

use rand_chacha::ChaCha8Rng;

use crate::encoder::params::{LayerSlots, ParamVars};
use crate::encoder::ModelParams;
use crate::error::{Error, Result};
use crate::numcore::{Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::tamatrix::{apply_bias, build_bias, TargetAwarenessBias, TargetAwarenessConfig};
use crate::textdata::TokenizedExample;

const LN_EPS: f64 = 1e-5;

/// Train mode draws dropout masks from the given generator.
pub enum ForwardMode<'a> {
    Eval,
    Train { rng: &'a mut ChaCha8Rng },
}

impl ForwardMode<'_> {
    fn is_train(&self) -> bool {
        matches!(self, ForwardMode::Train { .. })
    }
}

/// Projection weights for one head: `[d_model × d_k]` matrices and `[d_k]` biases.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub w_q: Var,
    pub b_q: Var,
    pub w_k: Var,
    pub b_k: Var,
    pub w_v: Var,
    pub b_v: Var,
}

/// One post-softmax attention matrix.
#[derive(Clone, Debug)]
pub struct AttentionMap<T> {
    pub layer: usize,
    pub head: usize,
    pub matrix: Tensor<T>,
}

fn dropout<T: Scalar>(tape: &mut Tape<T>, x: Var, rate: f64, mode: &mut ForwardMode<'_>) -> Result<Var> {
    match mode {
        ForwardMode::Train { rng } if rate > 0.0 => tape.dropout(x, rate, *rng),
        _ => Ok(x),
    }
}

/// `softmax(q·kᵀ/√d_k + α·M)·v` for one head. Returns the head output and the
/// attention probabilities (before any dropout).
#[allow(clippy::too_many_arguments)]
pub fn attend<T: Scalar>(
    tape: &mut Tape<T>,
    q: Var,
    k: Var,
    v: Var,
    bias: &TargetAwarenessBias,
    alpha: T,
    pad_mask: &[bool],
    dropout_rate: f64,
    mode: &mut ForwardMode<'_>,
) -> Result<(Var, Var)> {
    let d_k = tape.value(q).dims2().1;
    let raw = tape.matmul_nt(q, k)?;
    let scaled = tape.scale(raw, T::one() / T::from_count(d_k).sqrt())?;
    let biased = apply_bias(tape, scaled, bias, alpha, pad_mask)?;
    let probs = tape.softmax_rows(biased)?;
    let dropped = dropout(tape, probs, dropout_rate, mode)?;
    let out = tape.matmul(dropped, v)?;
    Ok((out, probs))
}

/// Single self-attention head over `x [seq×d_model]`, eval mode.
pub fn attention_head<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    head: &HeadVars,
    bias: &TargetAwarenessBias,
    alpha: T,
    pad_mask: &[bool],
) -> Result<(Var, Var)> {
    let q = tape.matmul(x, head.w_q)?;
    let q = tape.add_row(q, head.b_q)?;
    let k = tape.matmul(x, head.w_k)?;
    let k = tape.add_row(k, head.b_k)?;
    let v = tape.matmul(x, head.w_v)?;
    let v = tape.add_row(v, head.b_v)?;
    attend(tape, q, k, v, bias, alpha, pad_mask, 0.0, &mut ForwardMode::Eval)
}

fn effective_alpha<T: Scalar>(ta: &TargetAwarenessConfig, layer: usize, head: usize, training: bool) -> T {
    if training || ta.enabled_at_inference {
        T::lit(ta.alpha_at(layer, head))
    } else {
        T::zero()
    }
}

struct Encoded {
    hidden: Var,
    maps: Vec<(usize, usize, Var)>,
}

fn encoder_layer<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    vars: &ParamVars,
    slots: &LayerSlots,
    layer: usize,
    x: Var,
    ex: &TokenizedExample,
    ta: &TargetAwarenessConfig,
    mode: &mut ForwardMode<'_>,
    maps: &mut Vec<(usize, usize, Var)>,
) -> Result<Var> {
    let cfg = params.config();
    let d_k = cfg.d_k();
    let p = |i: usize| vars.get(i);
    let bias = build_bias(ex);
    let pad_mask = ex.pad_mask();
    let training = mode.is_train();

    let q = tape.matmul(x, p(slots.w_q))?;
    let q = tape.add_row(q, p(slots.b_q))?;
    let k = tape.matmul(x, p(slots.w_k))?;
    let k = tape.add_row(k, p(slots.b_k))?;
    let v = tape.matmul(x, p(slots.w_v))?;
    let v = tape.add_row(v, p(slots.b_v))?;

    let mut heads = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let qh = tape.slice_cols(q, h * d_k, d_k)?;
        let kh = tape.slice_cols(k, h * d_k, d_k)?;
        let vh = tape.slice_cols(v, h * d_k, d_k)?;
        let alpha = effective_alpha(ta, layer, h, training);
        let (out, probs) = attend(tape, qh, kh, vh, &bias, alpha, &pad_mask, cfg.dropout, mode)?;
        maps.push((layer, h, probs));
        heads.push(out);
    }
    let merged = tape.concat_cols(&heads)?;
    let attn = tape.matmul(merged, p(slots.w_o))?;
    let attn = tape.add_row(attn, p(slots.b_o))?;
    let attn = dropout(tape, attn, cfg.dropout, mode)?;
    let res1 = tape.add(x, attn)?;
    let h1 = tape.layer_norm(res1, p(slots.ln1_gamma), p(slots.ln1_beta), T::lit(LN_EPS))?;

    let ff = tape.matmul(h1, p(slots.w_ff1))?;
    let ff = tape.add_row(ff, p(slots.b_ff1))?;
    let ff = tape.gelu(ff)?;
    let ff = tape.matmul(ff, p(slots.w_ff2))?;
    let ff = tape.add_row(ff, p(slots.b_ff2))?;
    let ff = dropout(tape, ff, cfg.dropout, mode)?;
    let res2 = tape.add(h1, ff)?;
    tape.layer_norm(res2, p(slots.ln2_gamma), p(slots.ln2_beta), T::lit(LN_EPS))
}

fn encode_one<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    vars: &ParamVars,
    ex: &TokenizedExample,
    ta: &TargetAwarenessConfig,
    mode: &mut ForwardMode<'_>,
) -> Result<Encoded> {
    let cfg = params.config();
    let lay = &params.layout;
    let seq = ex.seq_len();
    if seq != cfg.max_len {
        return Err(Error::dim("encode", &[cfg.max_len], &[seq]));
    }
    let tok = tape.gather_rows(vars.get(lay.tok_emb), &ex.ids)?;
    let pos = tape.slice_rows(vars.get(lay.pos_emb), 0, seq)?;
    let x = tape.add(tok, pos)?;
    let x = tape.layer_norm(x, vars.get(lay.emb_ln_gamma), vars.get(lay.emb_ln_beta), T::lit(LN_EPS))?;
    let mut x = dropout(tape, x, cfg.dropout, mode)?;
    let mut maps = Vec::new();
    for (l, slots) in lay.layers.iter().enumerate() {
        x = encoder_layer(tape, params, vars, slots, l, x, ex, ta, mode, &mut maps)?;
    }
    Ok(Encoded { hidden: x, maps })
}

/// Records the batch forward pass and returns `[batch × n_labels]` logits.
pub fn forward_logits<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    vars: &ParamVars,
    batch: &[TokenizedExample],
    ta: &TargetAwarenessConfig,
    mode: &mut ForwardMode<'_>,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let mut hidden = Vec::with_capacity(batch.len());
    for ex in batch {
        hidden.push(encode_one(tape, params, vars, ex, ta, mode)?.hidden);
    }
    let pooled = tape.stack_rows(&hidden, 0)?;
    let lay = &params.layout;
    let logits = tape.matmul(pooled, vars.get(lay.cls_w))?;
    tape.add_row(logits, vars.get(lay.cls_b))
}

/// Mean cross-entropy of the batch; the tape holds everything for backward.
pub fn batch_loss<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    vars: &ParamVars,
    batch: &[TokenizedExample],
    ta: &TargetAwarenessConfig,
    mode: &mut ForwardMode<'_>,
) -> Result<Var> {
    let logits = forward_logits(tape, params, vars, batch, ta, mode)?;
    let labels: Vec<usize> = batch.iter().map(|e| e.label_id).collect();
    tape.cross_entropy(logits, &labels)
}

/// Eval-mode logits `[batch × n_labels]`.
pub fn encode<T: Scalar>(
    batch: &[TokenizedExample],
    params: &ModelParams<T>,
    ta: &TargetAwarenessConfig,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let logits = forward_logits(&mut tape, params, &vars, batch, ta, &mut ForwardMode::Eval)?;
    Ok(tape.value(logits).clone())
}

/// Every layer's and head's post-softmax matrix for one example, in
/// `(layer, head)` order, exactly as used in the eval forward pass.
pub fn attention_maps<T: Scalar>(
    example: &TokenizedExample,
    params: &ModelParams<T>,
    ta: &TargetAwarenessConfig,
) -> Result<Vec<AttentionMap<T>>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let enc = encode_one(&mut tape, params, &vars, example, ta, &mut ForwardMode::Eval)?;
    Ok(enc
        .maps
        .into_iter()
        .map(|(layer, head, v)| AttentionMap {
            layer,
            head,
            matrix: tape.value(v).clone(),
        })
        .collect())
}

/// Argmax over each row of eval-mode logits.
pub fn predict<T: Scalar>(
    batch: &[TokenizedExample],
    params: &ModelParams<T>,
    ta: &TargetAwarenessConfig,
) -> Result<Vec<usize>> {
    let logits = encode(batch, params, ta)?;
    let c = logits.dims2().1;
    Ok(logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect())
}
