//! Synthetic style corpora with paragraph-consistent styles.
//!
//! Stands in for large unlabeled review data: every document samples one side
//! per style axis, all of its sentences are rendered with that side's
//! rewrites, and the side assignment is recorded as `style_id` for oracle
//! evaluation only — the trainer never sees it. Rewrites are deterministic,
//! invertible token substitutions, so a rule-based classifier can label any
//! output exactly and "content preservation" has a ground truth.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::corpus::RawDocument;
use crate::error::{RestyleError, Result};
use crate::rng::stream;

/// Filler vocabulary the generator draws non-styled words from.
/// All lowercase ASCII, so generated lines survive the review charset filter.
pub const BASE_WORDS: &[&str] = &[
    "the", "a", "this", "that", "every", "some", "any", "each", "our", "their", "its", "his",
    "her", "one", "two", "few", "many", "most", "other", "same", "new", "old", "good", "bad",
    "big", "small", "long", "short", "high", "low", "early", "late", "young", "simple", "clear",
    "dark", "light", "warm", "cold", "dry", "wet", "soft", "hard", "quiet", "loud", "quick",
    "slow", "plain", "fine", "fair", "deep", "wide", "narrow", "smooth", "rough", "clean",
    "fresh", "sweet", "bitter", "gentle", "steady", "bright", "dull", "heavy", "time", "day",
    "night", "week", "year", "morning", "evening", "house", "room", "door", "window", "table",
    "chair", "garden", "street", "road", "river", "hill", "field", "tree", "stone", "water",
    "fire", "wind", "rain", "snow", "cloud", "star", "moon", "sun", "bird", "fish", "horse",
    "dog", "cat", "child", "friend", "family", "people", "man", "woman", "king", "teacher",
    "farmer", "doctor", "writer", "singer", "walks", "runs", "sits", "stands", "sleeps",
    "wakes", "eats", "drinks", "reads", "writes", "sings", "plays", "works", "rests", "waits",
    "watches", "listens", "speaks", "calls", "opens", "closes", "brings", "takes", "gives",
    "finds", "keeps", "holds", "turns", "moves", "stops", "starts", "grows", "falls", "rises",
    "shines", "sounds", "seems", "stays", "comes", "goes", "lives", "loves", "likes", "wants",
    "needs", "sees", "hears", "knows", "thinks", "feels", "near", "far", "here", "there",
    "again", "often", "always", "never", "soon", "today", "still", "quite", "very", "almost",
];

/// One style axis: a named pair of sides with a deterministic, invertible
/// rewrite between them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StyleAxis {
    pub name: String,
    /// Side labels, e.g. `["us", "uk"]`.
    pub sides: [String; 2],
    /// Word substitution table: `lexicon[i][0]` is side 0's form,
    /// `lexicon[i][1]` side 1's.
    pub lexicon: Vec<[String; 2]>,
    /// Optional punctuation rewrite: a connector token per side, inserted
    /// mid-sentence (e.g. `[",", ":"]`). Casing transforms are pointless
    /// here because the review pipeline lowercases everything.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connectors: Option<[String; 2]>,
}

impl StyleAxis {
    /// All marker strings for one side (lexicon words plus connector).
    pub fn markers(&self, side: usize) -> impl Iterator<Item = &str> {
        self.lexicon
            .iter()
            .map(move |pair| pair[side].as_str())
            .chain(self.connectors.iter().map(move |c| c[side].as_str()))
    }

    /// Rewrites a token to the other side if it is a marker; `None` otherwise.
    pub fn flip_token(&self, token: &str) -> Option<&str> {
        for pair in &self.lexicon {
            if pair[0] == token {
                return Some(&pair[1]);
            }
            if pair[1] == token {
                return Some(&pair[0]);
            }
        }
        if let Some(c) = &self.connectors {
            if c[0] == token {
                return Some(&c[1]);
            }
            if c[1] == token {
                return Some(&c[0]);
            }
        }
        None
    }
}

/// Declarative description of a synthetic corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticStyleSpec {
    /// How many filler words from [`BASE_WORDS`] are in play.
    pub base_vocab_size: usize,
    /// Words per sentence (before the final period), inclusive bounds.
    pub sentence_length_range: (usize, usize),
    /// Sentences per document, inclusive bounds.
    #[serde(default = "default_sentences_per_doc")]
    pub sentences_per_doc: (usize, usize),
    /// Styled word slots per sentence, inclusive bounds. Raised to the axis
    /// count if lower, so every sentence carries a marker for every axis.
    #[serde(default = "default_styled_per_sentence")]
    pub styled_per_sentence: (usize, usize),
    pub axes: Vec<StyleAxis>,
}

fn default_sentences_per_doc() -> (usize, usize) {
    (2, 8)
}

fn default_styled_per_sentence() -> (usize, usize) {
    (1, 2)
}

impl SyntheticStyleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(RestyleError::Config("spec has no style axes".into()));
        }
        if self.base_vocab_size < 10 || self.base_vocab_size > BASE_WORDS.len() {
            return Err(RestyleError::Config(format!(
                "base_vocab_size must be in [10, {}]",
                BASE_WORDS.len()
            )));
        }
        let (lo, hi) = self.sentence_length_range;
        if lo < 3 || lo > hi {
            return Err(RestyleError::Config("bad sentence_length_range".into()));
        }
        let (slo, shi) = self.sentences_per_doc;
        if slo < 1 || slo > shi {
            return Err(RestyleError::Config("bad sentences_per_doc".into()));
        }
        if self.styled_per_sentence.0 > self.styled_per_sentence.1 {
            return Err(RestyleError::Config("bad styled_per_sentence".into()));
        }
        let base: HashSet<&str> = self.base_words().iter().copied().collect();
        let mut seen: HashSet<&str> = HashSet::new();
        for axis in &self.axes {
            if axis.lexicon.is_empty() {
                return Err(RestyleError::Config(format!(
                    "axis '{}' has an empty lexicon table",
                    axis.name
                )));
            }
            if axis.sides[0] == axis.sides[1] {
                return Err(RestyleError::Config(format!(
                    "axis '{}' sides must differ",
                    axis.name
                )));
            }
            for pair in &axis.lexicon {
                for word in pair {
                    if word.is_empty() || !word.chars().all(|c| c.is_ascii_lowercase() || c == '-')
                    {
                        return Err(RestyleError::Config(format!(
                            "lexicon word '{word}' must be lowercase ascii"
                        )));
                    }
                    if base.contains(word.as_str()) {
                        return Err(RestyleError::Config(format!(
                            "lexicon word '{word}' collides with the base vocabulary"
                        )));
                    }
                    if !seen.insert(word) {
                        return Err(RestyleError::Config(format!(
                            "marker '{word}' appears twice; rewrites must be invertible"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn base_words(&self) -> &[&'static str] {
        &BASE_WORDS[..self.base_vocab_size.min(BASE_WORDS.len())]
    }

    /// Side assignment encoded as a `style_id`: side names joined with `|`
    /// in axis order.
    pub fn style_id(&self, sides: &[usize]) -> String {
        self.axes
            .iter()
            .zip(sides)
            .map(|(axis, &s)| axis.sides[s].as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Applies every axis rewrite to whitespace tokens of `text`, flipping
    /// each marker to its partner form. The ground-truth "perfect" transfer.
    pub fn rewrite(&self, text: &str) -> String {
        text.split_whitespace()
            .map(|tok| {
                for axis in &self.axes {
                    if let Some(flipped) = axis.flip_token(tok) {
                        return flipped;
                    }
                }
                tok
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Generates `num_documents` documents, each style-consistent across its
/// lines. Deterministic in `seed`; documents draw from independent
/// substreams.
pub fn generate_synthetic_corpus(
    spec: &SyntheticStyleSpec,
    num_documents: usize,
    seed: u64,
) -> Result<Vec<RawDocument>> {
    spec.validate()?;
    if num_documents == 0 {
        return Err(RestyleError::Config("num_documents must be > 0".into()));
    }
    let base = spec.base_words();
    let mut docs = Vec::with_capacity(num_documents);
    for doc_idx in 0..num_documents {
        let mut rng = stream(seed, &["synthetic-doc".into(), doc_idx.into()]);
        let sides: Vec<usize> = spec.axes.iter().map(|_| rng.random_range(0..2usize)).collect();
        let n_sentences = rng.random_range(spec.sentences_per_doc.0..=spec.sentences_per_doc.1);
        let mut lines = Vec::with_capacity(n_sentences);
        for _ in 0..n_sentences {
            lines.push(render_sentence(spec, base, &sides, &mut rng));
        }
        docs.push(RawDocument {
            lines,
            style_id: Some(spec.style_id(&sides)),
        });
    }
    Ok(docs)
}

/// Renders one sentence for the given side assignment. Raw length is kept
/// inside [26, 95] characters so that the doubly-preprocessed line always
/// lands in the acceptable [30, 100) window (preprocessing adds four
/// characters around the terminal period).
fn render_sentence(
    spec: &SyntheticStyleSpec,
    base: &[&str],
    sides: &[usize],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> String {
    let (len_lo, len_hi) = spec.sentence_length_range;
    let styled_lo = spec.styled_per_sentence.0.max(spec.axes.len()).max(1);
    let styled_hi = spec.styled_per_sentence.1.max(styled_lo);
    loop {
        let n_words = rng.random_range(len_lo..=len_hi);
        let n_styled = rng.random_range(styled_lo..=styled_hi).min(n_words);
        let mut words: Vec<String> = (0..n_words)
            .map(|_| base[rng.random_range(0..base.len())].to_string())
            .collect();
        let mut slots = sample(rng, n_words, n_styled).into_vec();
        slots.sort_unstable();
        for (k, &pos) in slots.iter().enumerate() {
            // The first slots cover each axis once; extras pick one at random.
            let axis_idx = if k < spec.axes.len() {
                k
            } else {
                rng.random_range(0..spec.axes.len())
            };
            let axis = &spec.axes[axis_idx];
            let pair = &axis.lexicon[rng.random_range(0..axis.lexicon.len())];
            words[pos] = pair[sides[axis_idx]].clone();
        }
        for (axis_idx, axis) in spec.axes.iter().enumerate() {
            if let Some(connectors) = &axis.connectors {
                if words.len() >= 4 {
                    words.insert(words.len() / 2, connectors[sides[axis_idx]].clone());
                }
            }
        }
        let mut line = words.join(" ");
        line.push('.');
        let len = line.chars().count();
        if (26..=95).contains(&len) {
            return line;
        }
    }
}
