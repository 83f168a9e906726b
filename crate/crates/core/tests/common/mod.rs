#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stanceformer::encoder::ModelConfig;
use stanceformer::numcore::Tensor;
use stanceformer::textdata::{assemble, TokenizedExample};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tiny_config(seed: u64) -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 8,
        d_ff: 16,
        vocab_size: 20,
        max_len: 12,
        n_labels: 3,
        dropout: 0.1,
        seed,
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Random non-special ids with a non-empty target, padded to `max_len`.
pub fn random_example(rng: &mut ChaCha8Rng, max_len: usize, vocab_size: usize, n_labels: usize) -> TokenizedExample {
    let budget = max_len - 3;
    let p = rng.gen_range(1..=budget.min(3));
    let l = rng.gen_range(1..=budget - p);
    let mut word = || rng.gen_range(4..vocab_size);
    let text: Vec<usize> = (0..l).map(|_| word()).collect();
    let target: Vec<usize> = (0..p).map(|_| word()).collect();
    let label = rng.gen_range(0..n_labels);
    assemble(&text, &target, max_len).unwrap().with_label(label)
}
