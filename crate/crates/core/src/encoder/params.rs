use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::ModelConfig;
use crate::error::{Error, Result};
use crate::numcore::{Tape, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Embedding,
    Xavier,
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
pub(crate) struct LayerSlots {
    pub w_q: usize,
    pub b_q: usize,
    pub w_k: usize,
    pub b_k: usize,
    pub w_v: usize,
    pub b_v: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub ln1_gamma: usize,
    pub ln1_beta: usize,
    pub w_ff1: usize,
    pub b_ff1: usize,
    pub w_ff2: usize,
    pub b_ff2: usize,
    pub ln2_gamma: usize,
    pub ln2_beta: usize,
}

/// Positions of every parameter in the flat list, derived from the config.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub emb_ln_gamma: usize,
    pub emb_ln_beta: usize,
    pub layers: Vec<LayerSlots>,
    pub cls_w: usize,
    pub cls_b: usize,
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut specs = Vec::new();
        let mut add = |name: String, shape: Vec<usize>, init: Init| {
            specs.push((name, shape, init));
            specs.len() - 1
        };
        let (d, f) = (cfg.d_model, cfg.d_ff);
        let tok_emb = add("embeddings.token".into(), vec![cfg.vocab_size, d], Init::Embedding);
        let pos_emb = add("embeddings.position".into(), vec![cfg.max_len, d], Init::Embedding);
        let emb_ln_gamma = add("embeddings.ln.gamma".into(), vec![d], Init::Ones);
        let emb_ln_beta = add("embeddings.ln.beta".into(), vec![d], Init::Zeros);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            layers.push(LayerSlots {
                w_q: add(p("attn.w_q"), vec![d, d], Init::Xavier),
                b_q: add(p("attn.b_q"), vec![d], Init::Zeros),
                w_k: add(p("attn.w_k"), vec![d, d], Init::Xavier),
                b_k: add(p("attn.b_k"), vec![d], Init::Zeros),
                w_v: add(p("attn.w_v"), vec![d, d], Init::Xavier),
                b_v: add(p("attn.b_v"), vec![d], Init::Zeros),
                w_o: add(p("attn.w_o"), vec![d, d], Init::Xavier),
                b_o: add(p("attn.b_o"), vec![d], Init::Zeros),
                ln1_gamma: add(p("ln1.gamma"), vec![d], Init::Ones),
                ln1_beta: add(p("ln1.beta"), vec![d], Init::Zeros),
                w_ff1: add(p("ffn.w1"), vec![d, f], Init::Xavier),
                b_ff1: add(p("ffn.b1"), vec![f], Init::Zeros),
                w_ff2: add(p("ffn.w2"), vec![f, d], Init::Xavier),
                b_ff2: add(p("ffn.b2"), vec![d], Init::Zeros),
                ln2_gamma: add(p("ln2.gamma"), vec![d], Init::Ones),
                ln2_beta: add(p("ln2.beta"), vec![d], Init::Zeros),
            });
        }
        let cls_w = add("classifier.w".into(), vec![d, cfg.n_labels], Init::Xavier);
        let cls_b = add("classifier.b".into(), vec![cfg.n_labels], Init::Zeros);
        Layout {
            tok_emb,
            pos_emb,
            emb_ln_gamma,
            emb_ln_beta,
            layers,
            cls_w,
            cls_b,
            specs,
        }
    }
}

/// All encoder weights as a flat, named list in a config-determined order.
#[derive(Clone, Debug)]
pub struct ModelParams<T> {
    config: ModelConfig,
    tensors: Vec<Tensor<T>>,
    pub(crate) layout: Layout,
}

impl<T: Scalar> ModelParams<T> {
    /// Xavier-uniform projections, small uniform embeddings, zero biases and
    /// unit layer-norm gains, drawn from `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut tensors = Vec::with_capacity(layout.specs.len());
        for (_, shape, init) in &layout.specs {
            let n: usize = shape.iter().product();
            let data: Vec<T> = match init {
                Init::Zeros => vec![T::zero(); n],
                Init::Ones => vec![T::one(); n],
                Init::Embedding => (0..n).map(|_| T::lit(rng.gen_range(-0.1..0.1))).collect(),
                Init::Xavier => {
                    let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    (0..n).map(|_| T::lit(rng.gen_range(-a..a))).collect()
                }
            };
            tensors.push(Tensor::new(shape.clone(), data)?);
        }
        Ok(ModelParams {
            config: config.clone(),
            tensors,
            layout,
        })
    }

    /// Rebuilds from named tensors, requiring exactly the layout's names and shapes.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        if named.len() != layout.specs.len() {
            return Err(Error::Data(format!(
                "expected {} parameter tensors, found {}",
                layout.specs.len(),
                named.len()
            )));
        }
        let mut tensors = Vec::with_capacity(named.len());
        for ((name, t), (want, shape, _)) in named.into_iter().zip(&layout.specs) {
            if &name != want || t.shape() != shape.as_slice() {
                return Err(Error::Data(format!(
                    "parameter `{name}` {:?} does not match expected `{want}` {shape:?}",
                    t.shape()
                )));
            }
            tensors.push(t);
        }
        Ok(ModelParams {
            config: config.clone(),
            tensors,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.tensors.iter_mut().collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.layout.specs.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names().zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let i = self.names().position(|n| n == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Concatenation of every tensor's data in layout order.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn load_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::dim("load_flat", &[self.param_count()], &[flat.len()]));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            layout: self.layout.clone(),
        }
    }

    /// Puts every parameter on the tape, as trainable leaves or constants.
    pub fn register(&self, tape: &mut Tape<T>, trainable: bool) -> ParamVars {
        ParamVars(
            self.tensors
                .iter()
                .map(|t| {
                    if trainable {
                        tape.param(t.clone())
                    } else {
                        tape.constant(t.clone())
                    }
                })
                .collect(),
        )
    }

    /// Copies gradients computed on `tape` back onto the parameters.
    pub fn collect_grads(&mut self, tape: &Tape<T>, vars: &ParamVars) -> Result<()> {
        for (t, &v) in self.tensors.iter_mut().zip(&vars.0) {
            let g = tape.grad(v).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); t.numel()]);
            t.set_grad(g)?;
        }
        Ok(())
    }
}

/// Tape handles for a registered [`ModelParams`], same order.
#[derive(Clone, Debug)]
pub struct ParamVars(pub(crate) Vec<Var>);

impl ParamVars {
    pub fn get(&self, i: usize) -> Var {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[Var] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 20,
            max_len: 10,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            ..Default::default()
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = ModelParams::<f32>::init(&cfg()).unwrap();
        let b = ModelParams::<f32>::init(&cfg()).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        let mut other = cfg();
        other.seed = 9;
        assert_ne!(a.flatten(), ModelParams::<f32>::init(&other).unwrap().flatten());
    }

    #[test]
    fn param_count_follows_config() {
        let c = cfg();
        let p = ModelParams::<f64>::init(&c).unwrap();
        let (d, f, v, l) = (c.d_model, c.d_ff, c.vocab_size, c.max_len);
        let per_layer = 4 * (d * d + d) + 2 * d + (d * f + f) + (f * d + d) + 2 * d;
        let expected = v * d + l * d + 2 * d + c.n_layers * per_layer + d * c.n_labels + c.n_labels;
        assert_eq!(p.param_count(), expected);
    }

    #[test]
    fn from_named_rejects_shape_drift() {
        let p = ModelParams::<f64>::init(&cfg()).unwrap();
        let mut named: Vec<(String, Tensor<f64>)> = p.named().map(|(n, t)| (n.to_string(), t.clone())).collect();
        assert!(ModelParams::from_named(&cfg(), named.clone()).is_ok());
        named[0].1 = Tensor::zeros(vec![3, 3]).unwrap();
        assert!(ModelParams::from_named(&cfg(), named).is_err());
    }
}
