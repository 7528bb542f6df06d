use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNKNOWN: &str = "[UNK]";
pub const SEPARATOR: &str = "[SEP]";
pub const CLASSIFY: &str = "[CLS]";

/// Lowercased word and punctuation tokens. Runs of alphanumeric characters
/// form one token; every other non-space character is a token on its own.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_lowercase().collect());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq(pub Vec<u32>);

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

/// Token-to-index map. Special tokens occupy indices 0..3, corpus tokens
/// follow in lexicographic order, so the same corpus always yields the same
/// vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(words).collect();
        let tokens = [UNKNOWN, SEPARATOR, CLASSIFY]
            .into_iter()
            .map(str::to_string)
            .chain(words.into_iter().filter(|w| ![UNKNOWN, SEPARATOR, CLASSIFY].contains(&w.as_str())))
            .collect();
        Self::from_tokens(tokens).expect("specials present")
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3 || tokens[0] != UNKNOWN || tokens[1] != SEPARATOR || tokens[2] != CLASSIFY {
            return Err(Error::InvalidInput(
                "vocabulary must start with the special tokens".into(),
            ));
        }
        let index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if index.len() != tokens.len() {
            return Err(Error::InvalidInput("duplicate vocabulary entry".into()));
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unknown(&self) -> u32 {
        0
    }

    pub fn separator(&self) -> u32 {
        1
    }

    pub fn classify(&self) -> u32 {
        2
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Tokenizes `text`, mapping unknown words to `[UNK]` and keeping at most
    /// `max_tokens` tokens.
    pub fn tokenize(&self, text: &str, max_tokens: usize) -> TokenSeq {
        TokenSeq(
            words(text)
                .iter()
                .take(max_tokens)
                .map(|w| self.id(w))
                .collect(),
        )
    }

    /// `context tokens + [SEP] + response tokens`, at most `max_tokens` long.
    /// The response is kept whole when possible; the context is cut from the
    /// left so the most recent turns survive.
    pub fn pair_tokens<'a>(
        &self,
        context: impl IntoIterator<Item = &'a str>,
        response: &str,
        max_tokens: usize,
    ) -> TokenSeq {
        let budget = max_tokens.saturating_sub(1);
        let response = self.tokenize(response, budget);
        let ctx: Vec<u32> = context
            .into_iter()
            .flat_map(|t| self.tokenize(t, usize::MAX).0)
            .collect();
        let room = budget - response.len();
        let start = ctx.len().saturating_sub(room);
        let mut seq = Vec::with_capacity(ctx.len() - start + 1 + response.len());
        seq.extend_from_slice(&ctx[start..]);
        if max_tokens > 0 {
            seq.push(self.separator());
        }
        seq.extend_from_slice(&response.0);
        TokenSeq(seq)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(&self.tokens).expect("serializable");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::from_tokens(tokens)
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}
