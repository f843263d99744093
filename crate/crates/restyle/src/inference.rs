//! Exemplar-based targeted restyling and its variants.
//!
//! A handful of exemplar sentences per class define a direction in style
//! space: the decode style is the input's own extracted vector plus
//! `lambda * (mean target exemplar style - mean source exemplar style)`.
//! Overwrite mode discards the input's style and uses the mean target style
//! directly. Completion, shortening, and random augmentation are the same
//! machinery under fixed range settings.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::Vocab;
use crate::corruption::{compute_rates, TuningRanges};
use crate::error::{RestyleError, Result};
use crate::model::{DecodeOptions, Model, StyleVector};
use crate::TokenSeq;

/// A named set of exemplar sentences (1 to 1000) defining one side of a
/// style axis at inference time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ExemplarSet {
    pub name: String,
    pub sentences: Vec<String>,
}

impl ExemplarSet {
    pub fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(RestyleError::EmptyExemplarSet);
        }
        if self.sentences.len() > 1000 {
            return Err(RestyleError::Config(format!(
                "exemplar set '{}' has {} sentences; at most 1000 are supported",
                self.name,
                self.sentences.len()
            )));
        }
        Ok(())
    }

    fn digest(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.name.hash(&mut h);
        for s in &self.sentences {
            s.hash(&mut h);
        }
        h.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferMode {
    /// Move the input's style along the exemplar delta.
    Delta,
    /// Replace the input's style with the mean target exemplar style.
    Overwrite,
}

/// Everything one transfer needs.
#[derive(Debug, Clone)]
pub struct TransferRequest {
    pub input: String,
    pub source: ExemplarSet,
    pub target: ExemplarSet,
    pub lambda: f64,
    pub ranges: TuningRanges,
    pub mode: TransferMode,
    pub decode: DecodeOptions,
}

impl TransferRequest {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(RestyleError::Config("lambda must be non-negative".into()));
        }
        self.ranges.validate()?;
        self.decode.validate()?;
        self.source.validate()?;
        self.target.validate()
    }
}

/// Exemplar/settings file: one transfer axis as data — both exemplar
/// classes, the delta scale, and the tuning ranges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExemplarConfig {
    /// Style axis these classes belong to (informational; used by eval).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    pub classes: Vec<ExemplarSet>,
    pub lambda: f64,
    pub ranges: TuningRanges,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode: Option<DecodeOptions>,
}

impl ExemplarConfig {
    pub fn load(path: &Path) -> Result<ExemplarConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: ExemplarConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(RestyleError::Config(
                "exemplar config needs at least two classes".into(),
            ));
        }
        if self.lambda < 0.0 {
            return Err(RestyleError::Config("lambda must be non-negative".into()));
        }
        self.ranges.validate()?;
        if let Some(d) = &self.decode {
            d.validate()?;
        }
        for class in &self.classes {
            class.validate()?;
        }
        Ok(())
    }

    pub fn class(&self, name: &str) -> Result<&ExemplarSet> {
        self.classes
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| RestyleError::Config(format!("no exemplar class named '{name}'")))
    }
}

/// Arithmetic mean of the style vectors of every exemplar in the set.
pub fn mean_exemplar_style(set: &ExemplarSet, model: &Model) -> Result<StyleVector> {
    set.validate()?;
    let mut acc = StyleVector::zeros(model.config().d_model);
    for sentence in &set.sentences {
        let toks = tokenize_non_empty(model.vocab(), sentence)?;
        let style = model.extract_style(&toks)?;
        acc.values += &style.values;
    }
    acc.values /= set.sentences.len() as f64;
    Ok(acc)
}

/// The targeted-restyling arithmetic: `v_x + lambda * (v_trg - v_src)`.
pub fn target_style(
    v_x: &StyleVector,
    v_src: &StyleVector,
    v_trg: &StyleVector,
    lambda: f64,
) -> StyleVector {
    StyleVector { values: &v_x.values + &(lambda * &(&v_trg.values - &v_src.values)) }
}

fn tokenize_non_empty(vocab: &Vocab, text: &str) -> Result<TokenSeq> {
    let toks = vocab.tokenize(text);
    if toks.is_empty() {
        return Err(RestyleError::EmptyInput);
    }
    Ok(toks)
}

/// Style norms reported with each transfer, for downstream inspection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StyleNorms {
    pub input_style: f64,
    pub source_mean: f64,
    pub target_mean: f64,
    pub decode_style: f64,
}

/// One transfer's full record, as emitted by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferOutcome {
    pub input: String,
    pub output: String,
    pub measured_add_rate: f64,
    pub measured_delete_rate: f64,
    pub style_norms: StyleNorms,
}

/// Read-only inference wrapper around a loaded model. Mean exemplar styles
/// are cached per exemplar-set digest; the cache lives and dies with the
/// model it borrows, so a different checkpoint can never serve stale means.
pub struct TransferSession<'m> {
    model: &'m Model,
    mean_cache: HashMap<u64, StyleVector>,
}

impl<'m> TransferSession<'m> {
    pub fn new(model: &'m Model) -> TransferSession<'m> {
        TransferSession { model, mean_cache: HashMap::new() }
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn mean_style(&mut self, set: &ExemplarSet) -> Result<StyleVector> {
        let key = set.digest();
        if let Some(hit) = self.mean_cache.get(&key) {
            return Ok(hit.clone());
        }
        let mean = mean_exemplar_style(set, self.model)?;
        self.mean_cache.insert(key, mean.clone());
        Ok(mean)
    }

    /// Exemplar-based restyling of one input.
    pub fn transfer(&mut self, req: &TransferRequest, rng: &mut ChaCha8Rng) -> Result<String> {
        Ok(self.transfer_detailed(req, rng)?.output)
    }

    pub fn transfer_detailed(
        &mut self,
        req: &TransferRequest,
        rng: &mut ChaCha8Rng,
    ) -> Result<TransferOutcome> {
        req.validate()?;
        let input_toks = tokenize_non_empty(self.model.vocab(), &req.input)?;
        let v_x = self.model.extract_style(&input_toks)?;
        let v_src = self.mean_style(&req.source)?;
        let v_trg = self.mean_style(&req.target)?;
        let style = match req.mode {
            TransferMode::Delta => target_style(&v_x, &v_src, &v_trg, req.lambda),
            TransferMode::Overwrite => v_trg.clone(),
        };
        let outcome =
            self.decode_with_style(&req.input, &input_toks, &style, &req.ranges, &req.decode, rng)?;
        Ok(TransferOutcome {
            style_norms: StyleNorms {
                input_style: v_x.norm(),
                source_mean: v_src.norm(),
                target_mean: v_trg.norm(),
                decode_style: style.norm(),
            },
            ..outcome
        })
    }

    /// Style-aware completion: the prompt is preserved (delete range 0) and
    /// extended (add range 40-70%) in the exemplar-defined target style.
    pub fn complete(
        &mut self,
        prompt: &str,
        source: &ExemplarSet,
        target: &ExemplarSet,
        lambda: f64,
        decode: &DecodeOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<TransferOutcome> {
        let req = TransferRequest {
            input: prompt.to_string(),
            source: source.clone(),
            target: target.clone(),
            lambda,
            ranges: TuningRanges::new((0.40, 0.70), (0.0, 0.0))?,
            mode: TransferMode::Delta,
            decode: *decode,
        };
        self.transfer_detailed(&req, rng)
    }

    /// Shortening: the style is extracted from the input itself with no
    /// delta; ranges request almost no additions and heavy deletion.
    pub fn shorten(&mut self, input: &str, rng: &mut ChaCha8Rng) -> Result<TransferOutcome> {
        let input_toks = tokenize_non_empty(self.model.vocab(), input)?;
        let style = self.model.extract_style(&input_toks)?;
        let ranges = TuningRanges::new((0.0, 0.05), (0.40, 0.90))?;
        let decode = DecodeOptions::greedy(self.model.config().max_seq_len);
        let mut outcome =
            self.decode_with_style(input, &input_toks, &style, &ranges, &decode, rng)?;
        outcome.style_norms.input_style = style.norm();
        Ok(outcome)
    }

    /// Random augmentation: Gaussian noise with standard deviation `sigma`
    /// on each style component, then a deterministic greedy decode.
    pub fn augment(
        &mut self,
        input: &str,
        sigma: f64,
        ranges: &TuningRanges,
        rng: &mut ChaCha8Rng,
    ) -> Result<TransferOutcome> {
        if sigma < 0.0 {
            return Err(RestyleError::Config("sigma must be non-negative".into()));
        }
        let input_toks = tokenize_non_empty(self.model.vocab(), input)?;
        let base = self.model.extract_style(&input_toks)?;
        let mut style = base.clone();
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma is finite");
            for v in style.values.iter_mut() {
                *v += normal.sample(rng);
            }
        }
        let decode = DecodeOptions::greedy(self.model.config().max_seq_len);
        let mut outcome =
            self.decode_with_style(input, &input_toks, &style, ranges, &decode, rng)?;
        outcome.style_norms.input_style = base.norm();
        Ok(outcome)
    }

    fn decode_with_style(
        &self,
        input_text: &str,
        input_toks: &TokenSeq,
        style: &StyleVector,
        ranges: &TuningRanges,
        decode: &DecodeOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<TransferOutcome> {
        let states = self.model.encode(input_toks, style, ranges)?;
        let out_toks = self.model.decode(&states, decode, rng)?;
        let rates = compute_rates(input_toks, &out_toks);
        Ok(TransferOutcome {
            input: input_text.to_string(),
            output: self.model.vocab().detokenize(&out_toks)?,
            measured_add_rate: rates.add_rate,
            measured_delete_rate: rates.delete_rate,
            style_norms: StyleNorms {
                input_style: 0.0,
                source_mean: 0.0,
                target_mean: 0.0,
                decode_style: style.norm(),
            },
        })
    }
}
