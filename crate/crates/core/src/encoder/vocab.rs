use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::corpus::Dataset;
use crate::templates::TemplateSet;

pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";
pub const UNK_ID: usize = 0;
pub const PAD_ID: usize = 1;

/// Frozen token → id map. Ids are dense from 0; unknown tokens map to [`UNK_ID`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    /// Number of leading non-reserved entries that came from training sentences.
    train_tokens: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    train_tokens: usize,
    hash: String,
}

impl Vocabulary {
    /// Builds a vocabulary from explicit token lists, in first-occurrence order.
    pub fn from_parts<'a>(
        train: impl IntoIterator<Item = &'a str>,
        extra: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let mut v = Self {
            tokens: vec![UNK.to_string(), PAD.to_string()],
            index: HashMap::from([(UNK.to_string(), UNK_ID), (PAD.to_string(), PAD_ID)]),
            train_tokens: 0,
        };
        for t in train {
            v.insert(t);
        }
        v.train_tokens = v.tokens.len() - 2;
        for t in extra {
            v.insert(t);
        }
        v
    }

    fn insert(&mut self, t: &str) {
        if !self.index.contains_key(t) {
            self.index.insert(t.to_string(), self.tokens.len());
            self.tokens.push(t.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Tokens that came from training sentences (the OOE reference vocabulary).
    pub fn train_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens[2..2 + self.train_tokens].iter().map(String::as_str)
    }

    /// SHA-256 over the ordered token list, hex-encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

/// Vocabulary over every training token plus every word the templates can emit.
pub fn build_vocabulary(train: &Dataset, templates: Option<&TemplateSet>) -> Vocabulary {
    let train_iter = train.sentences.iter().flat_map(|s| s.tokens.iter().map(String::as_str));
    let template_words = templates.map(TemplateSet::vocabulary_words).unwrap_or_default();
    Vocabulary::from_parts(train_iter, template_words.iter().map(String::as_str))
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VocabFile { tokens: self.tokens.clone(), train_tokens: self.train_tokens, hash: self.hash() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let f = VocabFile::deserialize(d)?;
        if f.tokens.len() < 2 || f.tokens[UNK_ID] != UNK || f.tokens[PAD_ID] != PAD {
            return Err(D::Error::custom("vocabulary must start with the reserved UNK and PAD entries"));
        }
        if f.train_tokens + 2 > f.tokens.len() {
            return Err(D::Error::custom("train token count exceeds vocabulary size"));
        }
        let index: HashMap<String, usize> = f.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != f.tokens.len() {
            return Err(D::Error::custom("duplicate vocabulary entries"));
        }
        let v = Vocabulary { tokens: f.tokens, index, train_tokens: f.train_tokens };
        if v.hash() != f.hash {
            return Err(D::Error::custom(format!("vocabulary hash mismatch: file says {}, tokens hash to {}", f.hash, v.hash())));
        }
        Ok(v)
    }
}
