//! Corpus construction: raw documents, the review-preprocessing pipeline,
//! synthetic style corpora, adjacent-pair records, and the vocabulary.

mod preprocess;
mod synthetic;
mod vocab;

pub use preprocess::{acceptable_line, extract_adjacent_pairs, preprocess_review_line};
pub use synthetic::{generate_synthetic_corpus, StyleAxis, SyntheticStyleSpec, BASE_WORDS};
pub use vocab::{Vocab, BOS, EOS, PAD, UNK, UNK_SURFACE};

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{RestyleError, Result};
use crate::TokenSeq;

/// A raw multi-line document. `style_id` exists only on synthetic corpora
/// and never reaches the trainer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub lines: Vec<String>,
    pub style_id: Option<String>,
}

/// One adjacent-sentence training record: the line preceding the target is
/// its context. Serialized as one JSON object per line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct CorpusRecord {
    pub context: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_id: Option<String>,
}

/// A tokenized adjacent-sentence pair: the context precedes the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamplePair {
    pub context: TokenSeq,
    pub target: TokenSeq,
}

impl ExamplePair {
    /// Tokenizes a record; both sides must be non-empty after tokenization.
    pub fn from_record(record: &CorpusRecord, vocab: &Vocab) -> Result<ExamplePair> {
        let context = vocab.tokenize(&record.context);
        let target = vocab.tokenize(&record.target);
        if context.is_empty() || target.is_empty() {
            return Err(RestyleError::EmptyInput);
        }
        Ok(ExamplePair { context, target })
    }
}

/// Runs the review pipeline over one document's joined lines.
pub fn extract_adjacent_pairs_from_doc(doc: &RawDocument) -> Vec<(String, String)> {
    extract_adjacent_pairs(&doc.lines.join("\n"))
}

/// Converts documents into adjacent-pair records, carrying each document's
/// style id onto its records.
pub fn documents_to_records(docs: &[RawDocument]) -> Vec<CorpusRecord> {
    let mut records = Vec::new();
    for doc in docs {
        for (context, target) in extract_adjacent_pairs_from_doc(doc) {
            records.push(CorpusRecord {
                context,
                target,
                style_id: doc.style_id.clone(),
            });
        }
    }
    records
}

/// Writes records as UTF-8 JSON lines.
pub fn write_records(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSON-lines corpus file. Blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<CorpusRecord>> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

/// Strips style ids; the form in which records are handed to the trainer.
pub fn strip_style_ids(records: &[CorpusRecord]) -> Vec<CorpusRecord> {
    records
        .iter()
        .map(|r| CorpusRecord {
            context: r.context.clone(),
            target: r.target.clone(),
            style_id: None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip_through_jsonl() {
        let dir = std::env::temp_dir().join("restyle-corpus-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("corpus.jsonl");
        let records = vec![
            CorpusRecord {
                context: "first line here .".into(),
                target: "second line here .".into(),
                style_id: Some("us".into()),
            },
            CorpusRecord {
                context: "second line here .".into(),
                target: "third line here .".into(),
                style_id: None,
            },
        ];
        write_records(&path, &records).unwrap();
        assert_eq!(read_records(&path).unwrap(), records);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn stripping_removes_labels_only() {
        let records = vec![CorpusRecord {
            context: "a".into(),
            target: "b".into(),
            style_id: Some("x".into()),
        }];
        let stripped = strip_style_ids(&records);
        assert_eq!(stripped[0].context, "a");
        assert_eq!(stripped[0].style_id, None);
    }

    #[test]
    fn pair_count_is_survivors_minus_one() {
        let good = "a perfectly ordinary sentence that is long enough.";
        for n in 0..5 {
            let doc = RawDocument {
                lines: vec![good.to_string(); n],
                style_id: None,
            };
            let pairs = extract_adjacent_pairs_from_doc(&doc);
            assert_eq!(pairs.len(), n.saturating_sub(1));
        }
    }
}
