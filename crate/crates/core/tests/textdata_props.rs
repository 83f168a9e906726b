use proptest::prelude::*;
use stanceformer::textdata::{
    assemble, load_jsonl, preprocess, synth_corpus, write_jsonl, SynthSpec, CLS_ID, PAD_ID, SEP_ID,
};

#[test]
fn golden_preprocess_fixture() {
    let body = include_str!("fixtures/preprocess_golden.tsv");
    let mut n = 0;
    for line in body.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let (input, expected) = line.split_once('\t').expect("input<TAB>expected");
        let input = input.replace("\\t", "\t");
        assert_eq!(preprocess(&input), expected, "input {input:?}");
        n += 1;
    }
    assert!(n >= 20);
}

fn fragment() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z]{1,6}",
        Just("RT".to_string()),
        Just("via".to_string()),
        Just("@user:".to_string()),
        Just("@".to_string()),
        Just("http://t.co/x".to_string()),
        Just("www.".to_string()),
        Just("😀".to_string()),
        Just("\u{fe0f}".to_string()),
        Just("#tag".to_string()),
        "[ \t\n]{1,3}",
        "[.,:!?]",
    ]
}

proptest! {
    #[test]
    fn preprocess_is_idempotent(parts in prop::collection::vec(fragment(), 0..12)) {
        let s: String = parts.concat();
        let once = preprocess(&s);
        prop_assert_eq!(preprocess(&once), once.clone());
        prop_assert_eq!(once.to_lowercase(), once.clone());
        prop_assert!(!once.contains("  "));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn assemble_layout_identity(
        text in prop::collection::vec(4usize..1000, 0..40),
        target in prop::collection::vec(4usize..1000, 0..8),
        max_len in 5usize..48,
    ) {
        let fits = target.len() <= max_len - 3;
        let res = assemble(&text, &target, max_len);
        prop_assert_eq!(res.is_ok(), fits);
        let Ok(ex) = res else { return Ok(()) };
        let (l, p) = (ex.text_len(), ex.target_len());
        prop_assert_eq!(1 + l + 1 + p + 1 + ex.pad_len, max_len);
        prop_assert_eq!(ex.ids.len(), max_len);
        prop_assert_eq!(l, text.len().min(max_len - 3 - p));
        prop_assert_eq!(ex.text_span.clone(), 1..1 + l);
        prop_assert_eq!(ex.target_span.clone(), 2 + l..2 + l + p);
        prop_assert_eq!(ex.ids[0], CLS_ID);
        prop_assert_eq!(&ex.ids[ex.text_span.clone()], &text[..l]);
        prop_assert_eq!(ex.ids[1 + l], SEP_ID);
        prop_assert_eq!(&ex.ids[ex.target_span.clone()], &target[..]);
        prop_assert_eq!(ex.ids[2 + l + p], SEP_ID);
        prop_assert!(ex.ids[max_len - ex.pad_len..].iter().all(|&t| t == PAD_ID));
        prop_assert!(ex.validate().is_ok());
    }
}

#[test]
fn synth_labels_follow_generator_rule() {
    let spec = SynthSpec {
        seed: 1,
        n_train: 512,
        n_val: 128,
        n_test: 128,
        n_targets: 4,
        vocab_size: 64,
    };
    let c = synth_corpus(&spec).unwrap();
    for d in [&c.train, &c.val, &c.test] {
        for ex in &d.examples {
            assert_eq!(c.lexicon.classify(ex), Some(ex.label.as_str()), "{ex:?}");
            assert_eq!(preprocess(&ex.text), ex.text);
        }
    }
    assert_eq!((c.train.len(), c.val.len(), c.test.len()), (512, 128, 128));
}

#[test]
fn synth_jsonl_round_trips() {
    let spec = SynthSpec {
        seed: 4,
        n_train: 30,
        n_val: 10,
        n_test: 10,
        n_targets: 3,
        vocab_size: 40,
    };
    let c = synth_corpus(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("train.jsonl");
    write_jsonl(&c.train, &p).unwrap();
    let back = load_jsonl(&p, "train", Some(&c.train.labels)).unwrap();
    assert_eq!(back, c.train);
}
