mod common;

use std::cell::RefCell;

use num_rational::Ratio;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use stanceformer::encoder::ModelConfig;
use stanceformer::tamatrix::TargetAwarenessConfig;
use stanceformer::textdata::{synth_corpus, Dataset, RawExample, SynthSpec};
use stanceformer::traineval::*;
use stanceformer::{Error, Result};

type Q = Ratio<i64>;

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Per-label counts straight from the pairs, no confusion matrix.
fn oracle_macro_f1(gold: &[usize], pred: &[usize], names: &[String], conv: Convention) -> Q {
    let subset: Vec<usize> = match conv {
        Convention::AllLabels | Convention::ThreeLabel => (0..names.len()).collect(),
        Convention::FavorAgainst => (0..names.len())
            .filter(|&i| matches!(names[i].to_lowercase().as_str(), "favor" | "against"))
            .collect(),
    };
    let mut total = Q::from_integer(0);
    for &l in &subset {
        let pairs = gold.iter().zip(pred);
        let tp = pairs.clone().filter(|(&g, &p)| g == l && p == l).count() as i64;
        let fp = pairs.clone().filter(|(&g, &p)| g != l && p == l).count() as i64;
        let fn_ = pairs.filter(|(&g, &p)| g == l && p != l).count() as i64;
        if 2 * tp + fp + fn_ > 0 {
            total += Q::new(2 * tp, 2 * tp + fp + fn_);
        }
    }
    total / Q::from_integer(subset.len() as i64)
}

fn q_to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

#[test]
fn metric_matches_bruteforce_oracle() {
    let mut rng = common::rng(42);
    let sets = [
        (Convention::FavorAgainst, labels(&["AGAINST", "FAVOR", "NONE"])),
        (Convention::FavorAgainst, labels(&["favor", "against"])),
        (Convention::AllLabels, labels(&["neg", "pos"])),
        (Convention::AllLabels, labels(&["a", "b", "c", "d", "e"])),
        (Convention::ThreeLabel, labels(&["con", "pro", "neutral"])),
    ];
    for case in 0..200 {
        let (conv, names) = &sets[case % sets.len()];
        let n = rng.gen_range(1..60);
        let k = names.len();
        let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let oracle = oracle_macro_f1(&gold, &pred, names, *conv);
        let cm = ConfusionMatrix::from_pairs(&gold, &pred, k).unwrap();
        let subset = conv.label_subset(names).unwrap();
        assert_eq!(cm.macro_f1::<Q>(&subset), oracle, "case {case}");
        let report = score_predictions(&gold, &pred, names, *conv).unwrap();
        assert!((report.macro_f1 - q_to_f64(oracle)).abs() <= 1e-12, "case {case}");
        assert_eq!(report.confusion.total(), report.n);
        assert!(report.per_label.iter().all(|s| (0.0..=1.0).contains(&s.f1)));
    }
}

#[test]
fn worked_all_labels_example() {
    let names = labels(&["AGAINST", "FAVOR", "NONE"]);
    let gold = [1, 1, 0, 2];
    let pred = [1, 1, 1, 2];
    let cm = ConfusionMatrix::from_pairs(&gold, &pred, 3).unwrap();
    assert_eq!(cm.macro_f1::<Q>(&[0, 1, 2]), oracle_macro_f1(&gold, &pred, &names, Convention::AllLabels));
    assert_eq!(cm.macro_f1::<Q>(&[0, 1, 2]), Q::new(3, 5));
    let fa = score_predictions(&gold, &pred, &names, Convention::FavorAgainst).unwrap();
    assert_eq!(fa.averaged_labels, labels(&["AGAINST", "FAVOR"]));
    assert!((fa.macro_f1 - 0.4).abs() < 1e-12);
}

#[test]
fn convention_with_absent_label_is_config_error() {
    let names = labels(&["pos", "neg"]);
    assert!(matches!(
        score_predictions(&[0], &[0], &names, Convention::FavorAgainst),
        Err(Error::Config(_))
    ));
}

fn small_model() -> ModelConfig {
    ModelConfig {
        n_layers: 1,
        n_heads: 2,
        d_model: 8,
        d_ff: 16,
        max_len: 16,
        ..ModelConfig::default()
    }
}

fn tiny_dataset(split: &str) -> Dataset {
    let rows = [
        ("i like it", "cats", "FAVOR"),
        ("i hate it", "cats", "AGAINST"),
        ("so good", "dogs", "FAVOR"),
        ("so bad", "dogs", "AGAINST"),
    ];
    let ex = rows
        .iter()
        .map(|(t, g, l)| RawExample {
            text: t.to_string(),
            target: g.to_string(),
            label: l.to_string(),
        })
        .collect();
    Dataset::new(split, ex, labels(&["AGAINST", "FAVOR"])).unwrap()
}

#[test]
fn one_epoch_smoke() {
    let d = tiny_dataset("train");
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let m = train::<f32>(&d, &tiny_dataset("val"), &small_model(), &TargetAwarenessConfig::new(0.5).unwrap(), &cfg)
        .unwrap();
    assert_eq!(m.history.epochs.len(), 1);
    assert!(m.history.epochs[0].loss.is_finite() && m.history.initial_loss.is_finite());
}

#[test]
fn label_mismatch_between_splits_is_data_error() {
    let train_set = tiny_dataset("train");
    let mut val = tiny_dataset("val");
    val.labels = labels(&["AGAINST", "FAVOR", "NONE"]);
    let r = train::<f32>(&train_set, &val, &small_model(), &TargetAwarenessConfig::baseline(), &TrainConfig::default());
    assert!(matches!(r, Err(Error::Data(_))));
}

fn synth(n_train: usize, n_eval: usize) -> Splits {
    let c = synth_corpus(&SynthSpec {
        seed: 1,
        n_train,
        n_val: n_eval,
        n_test: n_eval,
        n_targets: 4,
        vocab_size: 64,
    })
    .unwrap();
    Splits::new(c.train, c.val, c.test).unwrap()
}

#[test]
fn same_seed_same_history_and_parameters() {
    let s = synth(64, 32);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        seed: 7,
        ..TrainConfig::default()
    };
    let ta = TargetAwarenessConfig::new(0.5).unwrap();
    let a = train::<f32>(&s.train, &s.val, &small_model(), &ta, &cfg).unwrap();
    let b = train::<f32>(&s.train, &s.val, &small_model(), &ta, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.checkpoint.params.flatten(), b.checkpoint.params.flatten());
    let other = train::<f32>(&s.train, &s.val, &small_model(), &ta, &TrainConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(a.checkpoint.params.flatten(), other.checkpoint.params.flatten());
}

#[test]
fn training_loss_descends_on_synthetic_corpus() {
    let s = synth(512, 128);
    let model = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 32,
        d_ff: 64,
        max_len: 16,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 20,
        patience: 20,
        ..TrainConfig::default()
    };
    let m = train::<f32>(&s.train, &s.val, &model, &TargetAwarenessConfig::baseline(), &cfg).unwrap();
    assert_eq!(m.history.epochs.len(), 20);
    let last = m.history.epochs.last().unwrap().loss;
    assert!(last < m.history.initial_loss, "{last} !< {}", m.history.initial_loss);
}

#[test]
fn history_csv_round_trips() {
    let h = History {
        initial_loss: 1.1,
        epochs: vec![
            EpochRecord {
                epoch: 1,
                loss: 0.123456789012345,
                val_f1: 1.0 / 3.0,
            },
            EpochRecord {
                epoch: 2,
                loss: 1e-9,
                val_f1: 0.0,
            },
        ],
        best_epoch: 1,
        best_val_f1: 1.0 / 3.0,
        stopped_early: false,
    };
    let mut buf = Vec::new();
    h.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("epoch,loss,val_f1\n"));
    assert_eq!(History::read_csv(&buf[..]).unwrap(), h.epochs);
}

struct Fake {
    scores: Vec<(f64, f64)>,
    tested: RefCell<Vec<f64>>,
}

impl AlphaTrial for Fake {
    fn validate(&mut self, alpha: f64) -> Result<f64> {
        Ok(self.scores.iter().find(|(a, _)| *a == alpha).unwrap().1)
    }

    fn test(&mut self, alpha: f64) -> Result<f64> {
        self.tested.borrow_mut().push(alpha);
        Ok(alpha * 10.0)
    }
}

#[test]
fn fake_evaluator_tie_goes_to_smaller_alpha() {
    let mut f = Fake {
        scores: vec![(0.1, 0.5), (0.2, 0.9), (0.3, 0.9)],
        tested: RefCell::new(Vec::new()),
    };
    let g = grid_search_with(&mut f, &[0.1, 0.2, 0.3]).unwrap();
    assert_eq!(g.chosen_alpha, 0.2);
    assert_eq!(g.test_f1, 2.0);
    assert_eq!(*f.tested.borrow(), vec![0.2]);
    assert_eq!(g.val_f1, vec![0.5, 0.9, 0.9]);
}

#[test]
fn single_alpha_grid_chooses_it() {
    let mut f = Fake {
        scores: vec![(0.7, 0.1)],
        tested: RefCell::new(Vec::new()),
    };
    assert_eq!(grid_search_with(&mut f, &[0.7]).unwrap().chosen_alpha, 0.7);
    assert!(grid_search_with(&mut f, &[]).is_err());
}

proptest! {
    #[test]
    fn chosen_alpha_is_smallest_maximiser(
        levels in prop::collection::vec(0u8..4, 1..10),
        seed in 0u64..1000,
    ) {
        let mut alphas: Vec<f64> = (1..=levels.len()).map(|i| i as f64 / 10.0).collect();
        alphas.shuffle(&mut common::rng(seed));
        let scores: Vec<(f64, f64)> = alphas.iter().zip(&levels).map(|(&a, &l)| (a, l as f64 / 4.0)).collect();
        let mut f = Fake { scores: scores.clone(), tested: RefCell::new(Vec::new()) };
        let g = grid_search_with(&mut f, &alphas).unwrap();
        let best = scores.iter().map(|s| s.1).fold(f64::MIN, f64::max);
        let smallest = scores.iter().filter(|s| s.1 == best).map(|s| s.0).fold(f64::MAX, f64::min);
        prop_assert_eq!(g.chosen_alpha, smallest);
    }
}

#[test]
fn ablation_arms_share_everything_but_the_knob() {
    let s = synth(48, 24);
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let ta = TargetAwarenessConfig::new(0.6).unwrap();
    let r = run_ablation::<f32>(&s, &small_model(), &cfg, &ta, &[3, 4]).unwrap();
    let names: Vec<&str> = r.arms.iter().map(|a| a.arm.name()).collect();
    assert_eq!(names, ["targets_original", "targets_masked", "stanceformer"]);
    assert!(r.arms.iter().all(|a| a.shared_config_hash == r.arms[0].shared_config_hash));
    let alphas: Vec<f64> = r.arms.iter().map(|a| a.alpha).collect();
    assert_eq!(alphas, [0.0, 0.0, 0.6]);
    for a in &r.arms {
        assert_eq!(a.runs.iter().map(|x| x.seed).collect::<Vec<_>>(), [3, 4]);
    }
    let md = r.to_markdown();
    assert_eq!(md.lines().count(), 5);
}
