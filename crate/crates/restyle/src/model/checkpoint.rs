//! Self-describing checkpoint container.
//!
//! Layout: 8-byte magic, little-endian u32 header length, JSON header
//! (format version, model config, vocabulary, optimizer name, positional
//! scheme, named parameter shapes in storage order), then all parameter
//! values as little-endian f64 in the same order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::corpus::Vocab;
use crate::error::{RestyleError, Result};

const MAGIC: &[u8; 8] = b"RSTYCKP1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    vocab: Vec<String>,
    optimizer: String,
    position_encoding: String,
    params: Vec<ParamShape>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct ParamShape {
    name: String,
    rows: usize,
    cols: usize,
}

pub fn save_checkpoint(path: &Path, model: &Model, optimizer: &str) -> Result<()> {
    let header = Header {
        version: CHECKPOINT_VERSION,
        config: *model.config(),
        vocab: model.vocab().words().to_vec(),
        optimizer: optimizer.to_string(),
        position_encoding: "learned-absolute".to_string(),
        params: model
            .params()
            .entries()
            .iter()
            .map(|e| ParamShape { name: e.name.clone(), rows: e.rows, cols: e.cols })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    out.write_all(&header_bytes)?;
    for v in model.params().data() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)
        .map_err(|_| RestyleError::Checkpoint("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(RestyleError::Checkpoint("bad magic; not a checkpoint".into()));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.version != CHECKPOINT_VERSION {
        return Err(RestyleError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }

    let vocab = Vocab::from_words(header.vocab);
    let expected: usize = header.params.iter().map(|p| p.rows * p.cols).sum();
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;
    if raw.len() != expected * 8 {
        return Err(RestyleError::Checkpoint(format!(
            "parameter blob is {} bytes, expected {}",
            raw.len(),
            expected * 8
        )));
    }
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let model = Model::from_parts(header.config, vocab, data)?;
    // The rebuilt layout must agree with the stored one.
    for (entry, stored) in model.params().entries().iter().zip(&header.params) {
        if entry.name != stored.name || entry.rows != stored.rows || entry.cols != stored.cols {
            return Err(RestyleError::Checkpoint(format!(
                "layout mismatch at '{}': stored '{}' ({}, {})",
                entry.name, stored.name, stored.rows, stored.cols
            )));
        }
    }
    Ok(model)
}
