//! Pluggable tokenization. The reference tokenizer does reversible
//! word/punctuation splitting over a growing, persistable vocabulary, which
//! keeps masking and packing tests deterministic; real-vocab adapters can be
//! registered behind the same trait.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const CLS: TokenId = 1;
pub const SEP: TokenId = 2;
pub const MASK: TokenId = 3;
pub const NUM_RESERVED: u32 = 4;

const RESERVED_TOKENS: [&str; 4] = ["[PAD]", "[CLS]", "[SEP]", "[MASK]"];

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed vocabulary: {0}")]
    Malformed(String),
    #[error("unknown tokenizer {0:?}")]
    UnknownTokenizer(String),
}

/// Bijective token <-> id map with fixed reserved ids.
#[derive(Debug, Clone)]
pub struct Vocab {
    token_to_id: IndexMap<String, TokenId>,
}

impl Default for Vocab {
    fn default() -> Self {
        let mut token_to_id = IndexMap::new();
        for (id, token) in RESERVED_TOKENS.iter().enumerate() {
            token_to_id.insert(token.to_string(), id as TokenId);
        }
        Vocab { token_to_id }
    }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.token_to_id.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token_of(&self, id: TokenId) -> Option<&str> {
        self.token_to_id
            .get_index(id as usize)
            .map(|(token, _)| token.as_str())
    }

    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(id) = self.token_to_id.get(token) {
            return *id;
        }
        let id = self.token_to_id.len() as TokenId;
        self.token_to_id.insert(token.to_string(), id);
        id
    }

    pub fn is_reserved(id: TokenId) -> bool {
        id < NUM_RESERVED
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        #[derive(Serialize)]
        struct File<'a> {
            version: u32,
            tokens: Vec<&'a str>,
        }
        let body = serde_json::to_string(&File {
            version: 1,
            tokens: self.token_to_id.keys().map(|s| s.as_str()).collect(),
        })
        .expect("vocab serialization is infallible");
        std::fs::write(path, body).map_err(|e| VocabError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        #[derive(Deserialize)]
        struct File {
            #[allow(dead_code)]
            version: u32,
            tokens: Vec<String>,
        }
        let raw = std::fs::read_to_string(path).map_err(|e| VocabError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let file: File =
            serde_json::from_str(&raw).map_err(|e| VocabError::Malformed(e.to_string()))?;
        let mut token_to_id = IndexMap::new();
        for (id, token) in file.tokens.into_iter().enumerate() {
            if token_to_id.insert(token.clone(), id as TokenId).is_some() {
                return Err(VocabError::Malformed(format!("duplicate token {token:?}")));
            }
        }
        for (id, token) in RESERVED_TOKENS.iter().enumerate() {
            if token_to_id.get_index(id).map(|(t, _)| t.as_str()) != Some(*token) {
                return Err(VocabError::Malformed(format!(
                    "reserved token {token} missing at id {id}"
                )));
            }
        }
        Ok(Vocab { token_to_id })
    }
}

pub trait Tokenizer: Send {
    fn encode(&mut self, text: &str) -> Vec<TokenId>;
    fn decode(&self, ids: &[TokenId]) -> String;
    fn vocab(&self) -> &Vocab;
    fn into_vocab(self: Box<Self>) -> Vocab;
}

/// Word runs (alphanumeric plus `'`, `-`, `_`) and single punctuation
/// characters; whitespace separates and is dropped. Decoding joins words with
/// spaces and attaches punctuation to the preceding token.
pub struct ReferenceTokenizer {
    vocab: Vocab,
}

impl ReferenceTokenizer {
    pub fn new() -> Self {
        ReferenceTokenizer {
            vocab: Vocab::default(),
        }
    }

    pub fn with_vocab(vocab: Vocab) -> Self {
        ReferenceTokenizer { vocab }
    }

    fn is_word_char(c: char) -> bool {
        c.is_alphanumeric() || matches!(c, '\'' | '-' | '_')
    }
}

impl Default for ReferenceTokenizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Tokenizer for ReferenceTokenizer {
    fn encode(&mut self, text: &str) -> Vec<TokenId> {
        let mut ids = Vec::new();
        let mut word = String::new();
        for c in text.chars() {
            if Self::is_word_char(c) {
                word.push(c);
                continue;
            }
            if !word.is_empty() {
                ids.push(self.vocab.intern(&word));
                word.clear();
            }
            if !c.is_whitespace() {
                ids.push(self.vocab.intern(&c.to_string()));
            }
        }
        if !word.is_empty() {
            ids.push(self.vocab.intern(&word));
        }
        ids
    }

    fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            let token = self.vocab.token_of(id).unwrap_or("<unk>");
            let is_punct = token.chars().count() == 1
                && !token.chars().next().map(Self::is_word_char).unwrap_or(false);
            if !out.is_empty() && !is_punct {
                out.push(' ');
            }
            out.push_str(token);
        }
        out
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn into_vocab(self: Box<Self>) -> Vocab {
        self.vocab
    }
}

/// Tokenizer construction by registered name.
pub fn tokenizer_by_name(name: &str, vocab: Option<Vocab>) -> Result<Box<dyn Tokenizer>, VocabError> {
    match name {
        "reference" => Ok(Box::new(match vocab {
            Some(v) => ReferenceTokenizer::with_vocab(v),
            None => ReferenceTokenizer::new(),
        })),
        other => Err(VocabError::UnknownTokenizer(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed_and_distinct() {
        let vocab = Vocab::default();
        assert_eq!(vocab.id_of("[PAD]"), Some(PAD));
        assert_eq!(vocab.id_of("[CLS]"), Some(CLS));
        assert_eq!(vocab.id_of("[SEP]"), Some(SEP));
        assert_eq!(vocab.id_of("[MASK]"), Some(MASK));
        assert_eq!(vocab.len(), 4);
    }

    #[test]
    fn encode_decode_roundtrips_simple_text() {
        let mut tok = ReferenceTokenizer::new();
        let ids = tok.encode("The battery-life is great, really.");
        assert_eq!(tok.decode(&ids), "The battery-life is great, really.");
    }

    #[test]
    fn repeated_words_share_one_id() {
        let mut tok = ReferenceTokenizer::new();
        let a = tok.encode("good good");
        assert_eq!(a[0], a[1]);
    }

    #[test]
    fn vocab_persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let mut tok = ReferenceTokenizer::new();
        let ids = tok.encode("persisted words here.");
        tok.vocab().save(&path).unwrap();

        let reloaded = Vocab::load(&path).unwrap();
        let tok2 = ReferenceTokenizer::with_vocab(reloaded);
        assert_eq!(tok2.decode(&ids), "persisted words here.");
    }

    #[test]
    fn malformed_vocab_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        std::fs::write(&path, r#"{"version":1,"tokens":["[PAD]","[CLS]"]}"#).unwrap();
        assert!(Vocab::load(&path).is_err());
    }

    #[test]
    fn registry_rejects_unknown_names() {
        assert!(tokenizer_by_name("reference", None).is_ok());
        assert!(matches!(
            tokenizer_by_name("wordpiece", None),
            Err(VocabError::UnknownTokenizer(_))
        ));
    }
}
