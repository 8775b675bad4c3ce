//! Closed word-level vocabulary and tokenizer.

use crate::error::{Error, Result};
use std::collections::{BTreeSet, HashMap};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const PAD: &str = "<pad>";
pub const YES: &str = "Yes";
pub const NO: &str = "No";

const RESERVED: [&str; 5] = [BOS, EOS, PAD, NO, YES];

/// Lowercased words; every punctuation character is its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if ch.is_alphanumeric() || ch == '\'' {
                cur.extend(ch.to_lowercase());
            } else {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Reserved tokens first, then the sorted word set of `texts`.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().filter(|w| !RESERVED.contains(&w.as_str())))
            .collect();
        Self::from_tokens(tokens).expect("reserved tokens are unique")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token `{t}`")));
            }
        }
        for r in RESERVED {
            if !index.contains_key(r) {
                return Err(Error::Vocabulary(format!("reserved token `{r}` missing")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<usize> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::Vocabulary(format!("unknown token `{token}`")))
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::Vocabulary(format!("unknown token id {id}")))
    }

    pub fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&i| i >= self.len()) {
            Some(bad) => Err(Error::Vocabulary(format!("unknown token id {bad}"))),
            None => Ok(()),
        }
    }

    pub fn bos(&self) -> usize {
        self.index[BOS]
    }
    pub fn eos(&self) -> usize {
        self.index[EOS]
    }
    pub fn pad(&self) -> usize {
        self.index[PAD]
    }
    pub fn yes(&self) -> usize {
        self.index[YES]
    }
    pub fn no(&self) -> usize {
        self.index[NO]
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let words: Result<Vec<&str>> = ids.iter().map(|&i| self.token(i)).collect();
        Ok(words?.join(" "))
    }

    /// JSON array of tokens in id order.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.tokens)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_tokens(serde_json::from_str(s)?)
    }
}
