use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::AnnotatedSentence;

pub const UNK: &str = "<unk>";
pub const UNK_ID: usize = 0;

/// Word-level vocabulary. Id 0 is reserved for unknown tokens; the rest are
/// assigned in first-seen order so that identical inputs give identical ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab {
            words: vec![UNK.to_string()],
            index: HashMap::from([(UNK.to_string(), UNK_ID)]),
        };
        for w in words {
            vocab.insert(w.into());
        }
        vocab
    }

    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a AnnotatedSentence>) -> Self {
        Self::from_words(sentences.into_iter().flat_map(|s| s.tokens.iter().cloned()))
    }

    fn insert(&mut self, word: String) {
        if !self.index.contains_key(&word) {
            self.index.insert(word.clone(), self.words.len());
            self.words.push(word);
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

impl Serialize for Vocab {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.words.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let words = Vec::<String>::deserialize(deserializer)?;
        if words.first().map(String::as_str) != Some(UNK) {
            return Err(serde::de::Error::custom("vocabulary must start with <unk>"));
        }
        Ok(Vocab::from_words(words.into_iter().skip(1)))
    }
}
