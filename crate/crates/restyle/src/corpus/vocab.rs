//! Word-level vocabulary with whitespace tokenization.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{RestyleError, Result};
use crate::TokenSeq;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

/// Surface form for the OOV sentinel. Underscore-framed so it stays inside
/// the review charset and cannot collide with corpus words, which never
/// start with an underscore.
pub const UNK_SURFACE: &str = "_unk_";

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", UNK_SURFACE];

/// Vocabulary built from a corpus: ids 0..4 are PAD/BOS/EOS/UNK, the rest
/// are words ordered by descending frequency (ties broken alphabetically).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds from an iterator of texts, keeping at most `max_size` entries
    /// including the four specials.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize) -> Vocab {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for text in texts {
            for tok in text.split_whitespace() {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let keep = max_size.saturating_sub(SPECIALS.len());
        let mut words: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        words.extend(ranked.into_iter().take(keep).map(|(w, _)| w.to_string()));
        Vocab::from_words(words)
    }

    /// Restores a vocabulary from its id-ordered word list (checkpoints).
    pub fn from_words(words: Vec<String>) -> Vocab {
        let mut index = HashMap::with_capacity(words.len());
        for (id, word) in words.iter().enumerate().skip(SPECIALS.len()) {
            index.insert(word.clone(), id);
        }
        Vocab { words, index }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    /// Whitespace-split tokenization; unseen words map to [`UNK`].
    pub fn tokenize(&self, text: &str) -> TokenSeq {
        text.split_whitespace()
            .map(|tok| self.index.get(tok).copied().unwrap_or(UNK))
            .collect()
    }

    /// Joins tokens with single spaces. PAD/BOS/EOS are structural and are
    /// skipped; [`UNK`] renders as [`UNK_SURFACE`]. Errors on ids outside
    /// the vocabulary.
    pub fn detokenize(&self, seq: &[usize]) -> Result<String> {
        let mut parts = Vec::with_capacity(seq.len());
        for &id in seq {
            if id >= self.words.len() {
                return Err(RestyleError::InvalidTokenId(id));
            }
            if id == PAD || id == BOS || id == EOS {
                continue;
            }
            parts.push(self.words[id].as_str());
        }
        Ok(parts.join(" "))
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn rebuild_index(&mut self) {
        let rebuilt = Vocab::from_words(std::mem::take(&mut self.words));
        *self = rebuilt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_words_share_an_id() {
        let v = Vocab::build(["a b a"], 100);
        let ids = v.tokenize("a b a");
        assert_eq!(ids.len(), 3);
        assert_eq!(ids[0], ids[2]);
        assert_ne!(ids[0], ids[1]);
    }

    #[test]
    fn round_trip_is_identity_on_in_vocab_text() {
        let line = "the quick brown fox jumps over the lazy dog .";
        let v = Vocab::build([line], 100);
        assert_eq!(v.detokenize(&v.tokenize(line)).unwrap(), line);
    }

    #[test]
    fn unseen_word_maps_to_unk() {
        let v = Vocab::build(["known words only"], 100);
        assert_eq!(v.tokenize("unknown"), vec![UNK]);
        assert_eq!(v.detokenize(&[UNK]).unwrap(), UNK_SURFACE);
    }

    #[test]
    fn out_of_range_id_errors() {
        let v = Vocab::build(["a"], 100);
        assert!(v.detokenize(&[v.size()]).is_err());
    }

    #[test]
    fn frequency_then_alphabetical_order() {
        let v = Vocab::build(["b b a c c c"], 100);
        // c (3) before b (2) before a (1).
        assert_eq!(v.words()[4..], ["c".to_string(), "b".to_string(), "a".to_string()]);
    }

    #[test]
    fn size_cap_applies() {
        let v = Vocab::build(["a b c d e f"], 6);
        assert_eq!(v.size(), 6);
    }
}
