//! Text preprocessing, word-level tokenization with span tracking, JSONL
//! datasets, and the synthetic target-dependent corpus.

mod dataset;
mod example;
mod preprocess;
mod synth;
mod vocab;

pub use dataset::{
    build_vocab, load_jsonl, read_label_manifest, to_jsonl, write_jsonl, write_label_manifest, Dataset, RawExample,
    TargetMode,
};
pub use example::{assemble, split_tokens, tokenize, TokenizedExample, MIN_SEQ_LEN};
pub use preprocess::{preprocess, RESERVED_WORDS};
pub use synth::{synth_corpus, SynthCorpus, SynthLexicon, SynthSpec, SYNTH_LABELS};
pub use vocab::{Vocabulary, CLS, CLS_ID, PAD, PAD_ID, SEP, SEP_ID, UNK, UNK_ID};
