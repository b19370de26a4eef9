//! Word-level vocabulary with reserved special tokens.

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grammar::{is_marker_surface, GrammarSpec};

pub type TokenId = u32;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: TokenId = 0;
pub const UNK_ID: TokenId = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_to_id: HashMap<String, TokenId>,
    special_count: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in id order. The leading run of
    /// `<...>` tokens is the special set; it must start with pad and unknown.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != PAD || tokens[1] != UNK {
            return Err(Error::validation(format!("vocabulary must start with {PAD} and {UNK}")));
        }
        let special_count = tokens.iter().take_while(|t| is_marker_surface(t)).count();
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.contains(char::is_whitespace) {
                return Err(Error::validation(format!("invalid vocabulary token {tok:?}")));
            }
            if token_to_id.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::validation(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Self {
            tokens,
            token_to_id,
            special_count,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn special_tokens(&self) -> &[String] {
        &self.tokens[..self.special_count]
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        (id as usize) < self.special_count
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn pad_id(&self) -> TokenId {
        PAD_ID
    }

    pub fn unk_id(&self) -> TokenId {
        UNK_ID
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// File form: one token per line, line number = id.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_file_str(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        Self::from_file_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_file_string().as_bytes())
    }

    /// SHA-256 of the file form.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_file_string().as_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        hex(&self.digest())
    }

    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| self.id(w).unwrap_or(self.unk_id()))
            .collect()
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self
                .token(id)
                .ok_or_else(|| Error::validation(format!("token id {id} outside vocabulary of {}", self.len())))?;
            words.push(tok);
        }
        Ok(words.join(" "))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds a word-level vocabulary of at most `max_size` entries (special
/// tokens included) over the union of `corpora`.
///
/// Pad, unknown and the grammar's marker tokens take the lowest ids; the
/// remaining slots go to the most frequent words, ties broken
/// lexicographically.
pub fn build_vocab<'a, I>(corpora: I, max_size: usize, spec: &GrammarSpec) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut specials: Vec<String> = vec![PAD.into(), UNK.into()];
    specials.extend(spec.marker_tokens().map(str::to_string));
    if max_size < specials.len() {
        return Err(Error::validation(format!(
            "max vocabulary size {max_size} cannot hold {} special tokens",
            specials.len()
        )));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut seen_any = false;
    for text in corpora {
        for w in text.split_whitespace() {
            seen_any = true;
            *counts.entry(w).or_default() += 1;
        }
    }
    if !seen_any {
        return Err(Error::validation("cannot build a vocabulary from an empty corpus"));
    }
    let mut ranked: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|(w, _)| !specials.iter().any(|s| s == w))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let room = max_size - specials.len();
    let mut tokens = specials;
    tokens.extend(ranked.into_iter().take(room).map(|(w, _)| w.to_string()));
    Vocabulary::from_tokens(tokens)
}
