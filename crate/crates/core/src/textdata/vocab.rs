use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";

pub const CLS_ID: usize = 0;
pub const SEP_ID: usize = 1;
pub const PAD_ID: usize = 2;
pub const UNK_ID: usize = 3;

const SPECIALS: [&str; 4] = [CLS, SEP, PAD, UNK];

/// Word-level vocabulary. The four special tokens always occupy ids 0..3.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Vocabulary::from_tokens(r.tokens)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr { tokens: v.tokens }
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::from_tokens(Vec::<String>::new())
    }
}

impl Vocabulary {
    /// Specials first, then `tokens` in order with duplicates dropped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in SPECIALS.iter().map(|s| s.to_string()).chain(tokens.into_iter().map(Into::into)) {
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}
