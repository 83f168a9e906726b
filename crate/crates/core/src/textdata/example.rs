use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textdata::vocab::{Vocabulary, CLS_ID, PAD_ID, SEP_ID};

/// Shortest layout that still holds `[CLS] x [SEP] t [SEP]` with one token each.
pub const MIN_SEQ_LEN: usize = 5;

/// `[CLS] text [SEP] target [SEP] [PAD]*` with the spans recorded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedExample {
    pub ids: Vec<usize>,
    pub text_span: Range<usize>,
    pub target_span: Range<usize>,
    pub pad_len: usize,
    pub label_id: usize,
}

impl TokenizedExample {
    pub fn seq_len(&self) -> usize {
        self.ids.len()
    }

    pub fn text_len(&self) -> usize {
        self.text_span.len()
    }

    pub fn target_len(&self) -> usize {
        self.target_span.len()
    }

    /// `true` for trailing padding positions.
    pub fn pad_mask(&self) -> Vec<bool> {
        let content = self.ids.len() - self.pad_len;
        (0..self.ids.len()).map(|j| j >= content).collect()
    }

    pub fn with_label(mut self, label_id: usize) -> Self {
        self.label_id = label_id;
        self
    }

    /// Checks the layout identities; used by loaders and tests.
    pub fn validate(&self) -> Result<()> {
        let l = self.text_len();
        let p = self.target_len();
        let ok = self.ids.first() == Some(&CLS_ID)
            && self.text_span.start == 1
            && self.ids.get(self.text_span.end) == Some(&SEP_ID)
            && self.target_span.start == self.text_span.end + 1
            && self.ids.get(self.target_span.end) == Some(&SEP_ID)
            && 1 + l + 1 + p + 1 + self.pad_len == self.ids.len()
            && self.ids[self.ids.len() - self.pad_len..].iter().all(|&i| i == PAD_ID);
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!("malformed example layout: {self:?}")))
        }
    }
}

/// Splits on whitespace; every punctuation or symbol character is its own token.
pub fn split_tokens(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in s.char_indices() {
        let word = c.is_alphanumeric() || c == '_';
        if word {
            start.get_or_insert(i);
            continue;
        }
        if let Some(st) = start.take() {
            out.push(&s[st..i]);
        }
        if !c.is_whitespace() {
            out.push(&s[i..i + c.len_utf8()]);
        }
    }
    if let Some(st) = start {
        out.push(&s[st..]);
    }
    out
}

/// Maps a preprocessed string to token ids; unknown words become `[UNK]`.
pub fn tokenize(s: &str, vocab: &Vocabulary) -> Vec<usize> {
    split_tokens(s).into_iter().map(|t| vocab.id(t)).collect()
}

/// Lays out `[CLS] text [SEP] target [SEP]` padded to `max_len`.
///
/// Text is truncated from the right to make room; the target is never
/// truncated, so a target longer than `max_len - 3` is rejected.
pub fn assemble(text_ids: &[usize], target_ids: &[usize], max_len: usize) -> Result<TokenizedExample> {
    if max_len < MIN_SEQ_LEN {
        return Err(Error::Config(format!("max_len {max_len} below minimum {MIN_SEQ_LEN}")));
    }
    let budget = max_len - 3;
    let p = target_ids.len();
    if p > budget {
        return Err(Error::Data(format!(
            "target of {p} tokens does not fit max_len {max_len} (limit {budget})"
        )));
    }
    let l = text_ids.len().min(budget - p);
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS_ID);
    ids.extend_from_slice(&text_ids[..l]);
    ids.push(SEP_ID);
    ids.extend_from_slice(target_ids);
    ids.push(SEP_ID);
    let pad_len = max_len - ids.len();
    ids.resize(max_len, PAD_ID);
    Ok(TokenizedExample {
        ids,
        text_span: 1..1 + l,
        target_span: 2 + l..2 + l + p,
        pad_len,
        label_id: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textdata::vocab::UNK_ID;

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("", &Vocabulary::default()).is_empty());
    }

    #[test]
    fn tokenize_direct_lookup() {
        let v = Vocabulary::from_tokens(["a", "b"]);
        assert_eq!(v.id("a"), 4);
        assert_eq!(tokenize("a b a", &v), vec![4, 5, 4]);
    }

    #[test]
    fn oov_maps_to_unk_once() {
        let v = Vocabulary::from_tokens(["a", "b"]);
        let ids = tokenize("a zebra b", &v);
        assert_eq!(ids.iter().filter(|&&i| i == UNK_ID).count(), 1);
    }

    #[test]
    fn punctuation_is_split() {
        assert_eq!(split_tokens("hi, there!!"), vec!["hi", ",", "there", "!", "!"]);
        assert_eq!(split_tokens("#tag_1"), vec!["#", "tag_1"]);
    }

    #[test]
    fn assemble_minimal_layout() {
        let ex = assemble(&[7], &[9], 8).unwrap();
        assert_eq!(ex.ids, vec![CLS_ID, 7, SEP_ID, 9, SEP_ID, PAD_ID, PAD_ID, PAD_ID]);
        assert_eq!(ex.text_span, 1..2);
        assert_eq!(ex.target_span, 3..4);
        assert_eq!(ex.pad_len, 3);
        ex.validate().unwrap();
    }

    #[test]
    fn assemble_empty_target() {
        let ex = assemble(&[7, 8], &[], 8).unwrap();
        assert_eq!(ex.ids[..5], [CLS_ID, 7, 8, SEP_ID, SEP_ID]);
        assert!(ex.target_span.is_empty());
        assert_eq!(ex.target_span.start, 4);
        ex.validate().unwrap();
    }

    #[test]
    fn assemble_truncates_text_only() {
        let text: Vec<usize> = (10..30).collect();
        let ex = assemble(&text, &[5, 6], 10).unwrap();
        assert_eq!(ex.seq_len(), 10);
        assert_eq!(ex.pad_len, 0);
        assert_eq!(ex.text_len(), 5);
        assert_eq!(&ex.ids[ex.target_span.clone()], &[5, 6]);
        ex.validate().unwrap();
    }

    #[test]
    fn oversized_target_is_data_error() {
        assert!(matches!(assemble(&[1], &[4, 4, 4, 4, 4, 4], 8), Err(Error::Data(_))));
        assert!(assemble(&[], &[4; 5], 8).is_ok());
    }
}
