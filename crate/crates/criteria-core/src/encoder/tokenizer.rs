//! Word-level tokenizer for from-scratch encoder training.
//!
//! The vocabulary is built from a training corpus: words are ranked by
//! frequency (ties broken lexicographically) and truncated to a maximum
//! size. Four special ids are reserved ahead of the word list.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const MASK_ID: u32 = 3;

const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[MASK]"];

/// A frequency-ranked word tokenizer with reserved special tokens.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordTokenizer {
    words: Vec<String>,
    lowercase: bool,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl WordTokenizer {
    /// Build a vocabulary from an iterator of texts. `max_words` caps the
    /// number of non-special entries.
    pub fn train<'a>(texts: impl IntoIterator<Item = &'a str>, max_words: usize, lowercase: bool) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for text in texts {
            for token in text.split_whitespace() {
                let token = if lowercase { token.to_lowercase() } else { token.to_string() };
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_words);
        let words = ranked.into_iter().map(|(w, _)| w).collect();
        Self::from_words(words, lowercase)
    }

    fn from_words(words: Vec<String>, lowercase: bool) -> Self {
        let mut tok = WordTokenizer { words, lowercase, index: HashMap::new() };
        tok.rebuild_index();
        tok
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32 + SPECIALS.len() as u32))
            .collect();
    }

    /// Encode text into content token ids (no [CLS]; unknown words map to
    /// [UNK]).
    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .map(|t| {
                let key = if self.lowercase { t.to_lowercase() } else { t.to_string() };
                self.index.get(&key).copied().unwrap_or(UNK_ID)
            })
            .collect()
    }

    /// Total vocabulary size including the special ids.
    pub fn vocab_size(&self) -> usize {
        self.words.len() + SPECIALS.len()
    }

    pub fn mask_id(&self) -> u32 {
        MASK_ID
    }

    /// Surface form for a token id.
    pub fn token(&self, id: u32) -> &str {
        let id = id as usize;
        if id < SPECIALS.len() {
            SPECIALS[id]
        } else {
            self.words.get(id - SPECIALS.len()).map(String::as_str).unwrap_or("[UNK]")
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("tokenizer serializes"))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let mut tok: WordTokenizer = serde_json::from_str(&raw)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        tok.rebuild_index();
        Ok(tok)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_then_lexicographic_ranking() {
        let tok = WordTokenizer::train(["b a a c c c", "b"], 10, true);
        // c:3, a:2, b:2 -> c first, then a before b on the tie.
        assert_eq!(tok.encode("c a b"), vec![4, 5, 6]);
        assert_eq!(tok.token(4), "c");
        assert_eq!(tok.token(5), "a");
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let tok = WordTokenizer::train(["hello world"], 10, true);
        assert_eq!(tok.encode("hello mars"), vec![4, UNK_ID]);
    }

    #[test]
    fn lowercase_folding() {
        let tok = WordTokenizer::train(["Hello hello HELLO"], 10, true);
        assert_eq!(tok.vocab_size(), 5);
        assert_eq!(tok.encode("hElLo"), tok.encode("hello"));
    }

    #[test]
    fn cap_truncates_by_rank() {
        let tok = WordTokenizer::train(["x x x y y z"], 2, true);
        assert_eq!(tok.vocab_size(), 6);
        assert_eq!(tok.encode("z"), vec![UNK_ID]);
    }

    #[test]
    fn save_load_round_trip() {
        let tok = WordTokenizer::train(["alpha beta gamma alpha"], 10, true);
        let f = tempfile::NamedTempFile::new().unwrap();
        tok.save(f.path()).unwrap();
        let back = WordTokenizer::load(f.path()).unwrap();
        assert_eq!(back.encode("alpha beta gamma"), tok.encode("alpha beta gamma"));
        assert_eq!(back.vocab_size(), tok.vocab_size());
    }
}
