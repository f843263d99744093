//! The three-stack transformer: encoder, decoder, and style extractor, plus
//! style-vector fusion and add/delete-range conditioning.
//!
//! The style extractor shares the encoder's architecture and initial weights
//! (untied afterwards); its final hidden states are mean-pooled over real
//! token positions into a single fixed-width style vector. The encoder's
//! final states get that vector added element-wise, and a learned linear
//! projection of the conditioning 4-vector (add_low, add_high, del_low,
//! del_high) is prepended as an extra position. The decoder cross-attends
//! over the fused sequence.

mod checkpoint;
mod decode;
mod nn;
mod params;
mod stack;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use decode::{DecodeMode, DecodeOptions};
pub use nn::cross_entropy;
pub use params::{Grads, ParamEntry, ParamId, Params};

use ndarray::{s, Array1, Array2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ExamplePair, Vocab, BOS, EOS};
use crate::corruption::{apply_noise, NoiseSpec, TuningRanges};
use crate::error::{RestyleError, Result};
use crate::rng::stream;
use crate::TokenSeq;
use stack::{stack_bwd, stack_fwd, CrossInput, StackCache, StackParams};

/// Architecture hyperparameters. The defaults are the desk-scale shape:
/// big enough to exercise every mechanism, small enough to train in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    /// Layers per stack.
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    /// Upper bound on vocabulary size; the built vocabulary's exact size
    /// replaces it at model construction.
    pub vocab_size: usize,
    pub max_seq_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 128,
            num_layers: 2,
            num_heads: 4,
            ffn_dim: 256,
            vocab_size: 2000,
            max_seq_len: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0
            || self.num_layers == 0
            || self.num_heads == 0
            || self.ffn_dim == 0
            || self.vocab_size < 5
            || self.max_seq_len == 0
        {
            return Err(RestyleError::Config("model dimensions must be positive".into()));
        }
        if self.d_model % self.num_heads != 0 {
            return Err(RestyleError::Config(format!(
                "d_model {} not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        Ok(())
    }
}

/// Fixed-width style representation pooled from the extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleVector {
    pub values: Array1<f64>,
}

impl StyleVector {
    pub fn zeros(d: usize) -> StyleVector {
        StyleVector { values: Array1::zeros(d) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Final encoder states with the conditioning position prepended.
/// `states` has `input_len + 1` rows; every row is valid for a
/// single-example encode.
pub struct EncodedStates {
    pub states: Array2<f64>,
}

/// Internal batched form: example-major blocks of `s_len` rows, of which the
/// first `lens[b]` are valid.
pub(crate) struct FusedStates {
    pub states: Array2<f64>,
    pub s_len: usize,
    pub lens: Vec<usize>,
}

/// One training example after corruption: context, corrupted input, clean
/// target, and the conditioning vector sampled from the true rates.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub ctx: TokenSeq,
    pub inp: TokenSeq,
    pub tgt: TokenSeq,
    pub cond: [f64; 4],
}

pub struct Model {
    config: ModelConfig,
    vocab: Vocab,
    params: Params,
    extractor: StackParams,
    encoder: StackParams,
    decoder: StackParams,
    range_proj: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

impl Model {
    /// Builds a freshly initialized model. The encoder and style extractor
    /// start from identical weights; nothing ties them afterwards.
    pub fn new(mut config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Model> {
        config.vocab_size = vocab.size();
        config.validate()?;
        let mut b = params::ParamBuilder::new();
        let extractor = StackParams::build(&mut b, "extractor", &config, false, false);
        let encoder = StackParams::build(&mut b, "encoder", &config, false, false);
        let decoder = StackParams::build(&mut b, "decoder", &config, true, true);
        let range_proj = b.add("range_proj", 4, config.d_model);
        let out_w = b.add("out_proj.w", config.d_model, config.vocab_size);
        let out_b = b.add("out_proj.b", 1, config.vocab_size);
        let mut params = b.finish();

        let mut rng = stream(seed, &["model-init".into()]);
        encoder.init(&mut params, &mut rng);
        decoder.init(&mut params, &mut rng);
        params.init_normal(range_proj, stack::INIT_STD, &mut rng);
        params.init_normal(out_w, stack::INIT_STD, &mut rng);
        params.init_const(out_b, 0.0);
        params.copy_prefixed("encoder.", "extractor.");
        Ok(Model {
            config,
            vocab,
            params,
            extractor,
            encoder,
            decoder,
            range_proj,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn grads_buffer(&self) -> Grads {
        Grads::zeros_like(&self.params)
    }

    fn check_len(&self, seq: &[usize], what: &str) -> Result<()> {
        if seq.len() > self.config.max_seq_len {
            return Err(RestyleError::InputTooLong {
                len: seq.len(),
                max: self.config.max_seq_len,
            });
        }
        for &tok in seq {
            if tok >= self.config.vocab_size {
                return Err(RestyleError::InvalidTokenId(tok));
            }
        }
        let _ = what;
        Ok(())
    }

    /// Mean-pools the extractor's final hidden states over real positions.
    pub fn extract_style(&self, sentence: &[usize]) -> Result<StyleVector> {
        if sentence.is_empty() {
            return Err(RestyleError::EmptyInput);
        }
        self.check_len(sentence, "style input")?;
        let (styles, _) = self.extract_styles_batch(std::slice::from_ref(&sentence.to_vec()));
        Ok(StyleVector { values: styles.row(0).to_owned() })
    }

    /// Batched [`Model::extract_style`]: one row per sentence. Rejects empty
    /// and overlong sentences.
    pub fn extract_styles(&self, sentences: &[TokenSeq]) -> Result<Array2<f64>> {
        for s in sentences {
            if s.is_empty() {
                return Err(RestyleError::EmptyInput);
            }
            self.check_len(s, "style input")?;
        }
        // Chunked to bound the cached activations.
        let d = self.config.d_model;
        let mut out = Array2::zeros((sentences.len(), d));
        for (chunk_idx, chunk) in sentences.chunks(256).enumerate() {
            let (styles, _) = self.extract_styles_batch(chunk);
            out.slice_mut(s![chunk_idx * 256..chunk_idx * 256 + chunk.len(), ..])
                .assign(&styles);
        }
        Ok(out)
    }

    /// Batched style extraction; rows of the result are per-example vectors.
    pub(crate) fn extract_styles_batch(
        &self,
        sentences: &[TokenSeq],
    ) -> (Array2<f64>, StackCache) {
        let t_pad = sentences.iter().map(|s| s.len()).max().unwrap_or(0).max(1);
        let (h, cache) = stack_fwd(&self.params, &self.extractor, sentences, t_pad, None);
        let d = self.config.d_model;
        let mut styles = Array2::zeros((sentences.len(), d));
        for (b, seq) in sentences.iter().enumerate() {
            let len = seq.len().max(1);
            let block = h.slice(s![b * t_pad..b * t_pad + len, ..]);
            let mean = block.sum_axis(ndarray::Axis(0)) / len as f64;
            styles.row_mut(b).assign(&mean);
        }
        (styles, cache)
    }

    /// Encoder forward plus fusion: position 0 is the projected conditioning
    /// vector, positions `1..=len` are final token states with the style
    /// vector added element-wise.
    pub fn encode(
        &self,
        input: &[usize],
        style: &StyleVector,
        ranges: &TuningRanges,
    ) -> Result<EncodedStates> {
        self.check_len(input, "encoder input")?;
        ranges.validate()?;
        let fused = self.encode_batch(
            std::slice::from_ref(&input.to_vec()),
            &style_matrix(&[style.clone()]),
            &[ranges.conditioning()],
        );
        Ok(EncodedStates { states: fused.0.states })
    }

    /// Batched encode; returns the fused states and the encoder stack cache
    /// (empty when every input is empty).
    pub(crate) fn encode_batch(
        &self,
        inputs: &[TokenSeq],
        styles: &Array2<f64>,
        conds: &[[f64; 4]],
    ) -> (FusedStates, Option<StackCache>) {
        let batch = inputs.len();
        let d = self.config.d_model;
        let t_i = inputs.iter().map(|s| s.len()).max().unwrap_or(0);
        let (h_enc, cache) = if t_i > 0 {
            let (h, c) = stack_fwd(&self.params, &self.encoder, inputs, t_i, None);
            (Some(h), Some(c))
        } else {
            (None, None)
        };
        let s_len = t_i + 1;
        let mut states = Array2::zeros((batch * s_len, d));
        let range_w = self.params.mat(self.range_proj);
        let mut lens = Vec::with_capacity(batch);
        for (b, seq) in inputs.iter().enumerate() {
            let cond = Array1::from(conds[b].to_vec());
            states.row_mut(b * s_len).assign(&cond.dot(&range_w));
            if let Some(h) = &h_enc {
                for t in 0..seq.len() {
                    let mut row = states.row_mut(b * s_len + 1 + t);
                    row.assign(&h.row(b * t_i + t));
                    row += &styles.row(b);
                }
            }
            lens.push(seq.len() + 1);
        }
        (FusedStates { states, s_len, lens }, cache)
    }

    /// Autoregressive decoding over encoded states.
    pub fn decode(
        &self,
        states: &EncodedStates,
        options: &DecodeOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<TokenSeq> {
        options.validate()?;
        let fused = FusedStates {
            states: states.states.clone(),
            s_len: states.states.nrows(),
            lens: vec![states.states.nrows()],
        };
        Ok(decode::generate_batch(self, &fused, options, rng).remove(0))
    }

    /// Teacher-forced reconstruction loss for a single (context, target)
    /// pair given a corrupted input: cross-entropy against the clean target,
    /// averaged over target tokens (including the end-of-sequence token).
    pub fn reconstruction_loss(
        &self,
        pair: &ExamplePair,
        corrupted_input: &[usize],
        ranges: &TuningRanges,
    ) -> Result<f64> {
        let item = TrainItem {
            ctx: pair.context.clone(),
            inp: corrupted_input.to_vec(),
            tgt: pair.target.clone(),
            cond: ranges.conditioning(),
        };
        self.batch_loss(std::slice::from_ref(&item), None)
    }

    /// Same, but also returns parameter gradients (all three stacks, the
    /// range projection, and the output head).
    pub fn reconstruction_loss_with_grads(
        &self,
        pair: &ExamplePair,
        corrupted_input: &[usize],
        ranges: &TuningRanges,
    ) -> Result<(f64, Grads)> {
        let item = TrainItem {
            ctx: pair.context.clone(),
            inp: corrupted_input.to_vec(),
            tgt: pair.target.clone(),
            cond: ranges.conditioning(),
        };
        let mut grads = self.grads_buffer();
        let loss = self.batch_loss(std::slice::from_ref(&item), Some(&mut grads))?;
        Ok((loss, grads))
    }

    /// Batched joint forward/backward. The loss is the mean cross-entropy
    /// over all target tokens in the batch; gradients (when requested)
    /// accumulate into `grads`.
    pub(crate) fn batch_loss(
        &self,
        items: &[TrainItem],
        grads: Option<&mut Grads>,
    ) -> Result<f64> {
        let batch = items.len();
        if batch == 0 {
            return Err(RestyleError::EmptyInput);
        }
        for item in items {
            if item.ctx.is_empty() || item.tgt.is_empty() {
                return Err(RestyleError::EmptyInput);
            }
            self.check_len(&item.ctx, "context")?;
            self.check_len(&item.inp, "input")?;
            if item.tgt.len() + 1 > self.config.max_seq_len {
                return Err(RestyleError::InputTooLong {
                    len: item.tgt.len() + 1,
                    max: self.config.max_seq_len,
                });
            }
        }
        let d = self.config.d_model;
        let v = self.config.vocab_size;

        let contexts: Vec<TokenSeq> = items.iter().map(|i| i.ctx.clone()).collect();
        let inputs: Vec<TokenSeq> = items.iter().map(|i| i.inp.clone()).collect();
        let conds: Vec<[f64; 4]> = items.iter().map(|i| i.cond).collect();

        let (styles, ex_cache) = self.extract_styles_batch(&contexts);
        let (fused, enc_cache) = self.encode_batch(&inputs, &styles, &conds);

        // Decoder inputs are BOS-shifted targets; labels append EOS.
        let dec_tokens: Vec<TokenSeq> = items
            .iter()
            .map(|i| {
                let mut t = Vec::with_capacity(i.tgt.len() + 1);
                t.push(BOS);
                t.extend_from_slice(&i.tgt);
                t
            })
            .collect();
        let t_d = dec_tokens.iter().map(|t| t.len()).max().unwrap();
        let cross = CrossInput { states: &fused.states, s_len: fused.s_len, lens: &fused.lens };
        let (h_dec, dec_cache) =
            stack_fwd(&self.params, &self.decoder, &dec_tokens, t_d, Some(cross));

        let mut logits = h_dec.dot(&self.params.mat(self.out_w));
        {
            let out_b = self.params.vec1(self.out_b);
            for mut row in logits.rows_mut() {
                row += &out_b;
            }
        }
        let mut labels = vec![0usize; batch * t_d];
        let mut weights = vec![0.0; batch * t_d];
        let total_tokens: usize = items.iter().map(|i| i.tgt.len() + 1).sum();
        let w = 1.0 / total_tokens as f64;
        for (b, item) in items.iter().enumerate() {
            for t in 0..=item.tgt.len() {
                labels[b * t_d + t] = if t < item.tgt.len() { item.tgt[t] } else { EOS };
                weights[b * t_d + t] = w;
            }
        }

        let grads = match grads {
            Some(g) => g,
            None => {
                return Ok(cross_entropy(&logits, &labels, &weights, None));
            }
        };

        let mut dlogits = Array2::zeros((batch * t_d, v));
        let loss = cross_entropy(&logits, &labels, &weights, Some(&mut dlogits));

        // Output head.
        grads
            .mat_mut(&self.params, self.out_w)
            .scaled_add(1.0, &h_dec.t().dot(&dlogits));
        {
            let db = dlogits.sum_axis(ndarray::Axis(0));
            let mut out_b = grads.mat_mut(&self.params, self.out_b);
            for j in 0..v {
                out_b[[0, j]] += db[j];
            }
        }
        let dh_dec = dlogits.dot(&self.params.mat(self.out_w).t());

        // Decoder, then split the cross gradient into range / encoder / style.
        let dcross = stack_bwd(&self.params, &self.decoder, &dec_cache, &dh_dec, grads)
            .expect("decoder has cross-attention");

        let s_len = fused.s_len;
        let t_i = s_len - 1;
        let mut dstyles = Array2::zeros((batch, d));
        let mut cond_mat = Array2::zeros((batch, 4));
        let mut dh_enc = (t_i > 0).then(|| Array2::zeros((batch * t_i, d)));
        for (b, item) in items.iter().enumerate() {
            for j in 0..4 {
                cond_mat[[b, j]] = item.cond[j];
            }
            if let Some(dh) = &mut dh_enc {
                for t in 0..item.inp.len() {
                    let src = dcross.row(b * s_len + 1 + t);
                    dh.row_mut(b * t_i + t).assign(&src);
                    let mut ds = dstyles.row_mut(b);
                    ds += &src;
                }
            }
        }
        // Range projection: d W_r += cond^T · d(row0).
        let mut drow0 = Array2::zeros((batch, d));
        for b in 0..batch {
            drow0.row_mut(b).assign(&dcross.row(b * s_len));
        }
        grads
            .mat_mut(&self.params, self.range_proj)
            .scaled_add(1.0, &cond_mat.t().dot(&drow0));

        if let (Some(dh), Some(cache)) = (&dh_enc, &enc_cache) {
            let _ = stack_bwd(&self.params, &self.encoder, cache, dh, grads);
        }

        // Style pooling backward: each real context position receives
        // d_style / len.
        let t_c = ex_cache.t_pad;
        let mut dh_ex = Array2::zeros((batch * t_c, d));
        for (b, item) in items.iter().enumerate() {
            let len = item.ctx.len() as f64;
            for t in 0..item.ctx.len() {
                let mut row = dh_ex.row_mut(b * t_c + t);
                row.scaled_add(1.0 / len, &dstyles.row(b));
            }
        }
        let _ = stack_bwd(&self.params, &self.extractor, &ex_cache, &dh_ex, grads);

        Ok(loss)
    }

    /// Batched inference-mode generation for the back-translation tasks:
    /// extracts one style per context, encodes each input under it with the
    /// given conditioning, and decodes the whole batch at once.
    pub(crate) fn generate_styled_batch(
        &self,
        inputs: &[TokenSeq],
        contexts: &[TokenSeq],
        conds: &[[f64; 4]],
        options: &DecodeOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<TokenSeq>> {
        for (ctx, inp) in contexts.iter().zip(inputs) {
            if ctx.is_empty() {
                return Err(RestyleError::EmptyInput);
            }
            self.check_len(ctx, "context")?;
            self.check_len(inp, "input")?;
        }
        let (styles, _) = self.extract_styles_batch(contexts);
        let (fused, _) = self.encode_batch(inputs, &styles, conds);
        Ok(decode::generate_batch(self, &fused, options, rng))
    }

    /// Back-translation corruption: transfers `s_i` under the style of a
    /// random other sentence `s_j`, sampling the decode, with conditioning
    /// ranges fixed at zero. Runs in inference mode; no gradients are
    /// produced anywhere.
    pub fn bt_corrupt(
        &self,
        s_i: &[usize],
        s_j: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<TokenSeq> {
        self.bt_corrupt_with_ranges(s_i, s_j, &TuningRanges::ZERO, rng)
    }

    /// BT with explicit conditioning (the random-rates training variant).
    pub fn bt_corrupt_with_ranges(
        &self,
        s_i: &[usize],
        s_j: &[usize],
        ranges: &TuningRanges,
        rng: &mut ChaCha8Rng,
    ) -> Result<TokenSeq> {
        let style = self.extract_style(s_j)?;
        let states = self.encode(s_i, &style, ranges)?;
        let opts = DecodeOptions::sample(1.0, self.config.max_seq_len);
        self.decode(&states, &opts, rng)
    }

    /// Noisy back-translation: noise first, then the BT forward pass.
    pub fn nbt_corrupt(
        &self,
        s_i: &[usize],
        s_j: &[usize],
        spec: &NoiseSpec,
        replace_source: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<TokenSeq> {
        let noised = apply_noise(s_i, spec, replace_source, rng);
        self.bt_corrupt(&noised, s_j, rng)
    }

    pub(crate) fn decoder_params(&self) -> &StackParams {
        &self.decoder
    }

    pub(crate) fn out_ids(&self) -> (ParamId, ParamId) {
        (self.out_w, self.out_b)
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        vocab: Vocab,
        data: Vec<f64>,
    ) -> Result<Model> {
        let mut model = Model::new(config, vocab, 0)?;
        if data.len() != model.params.total_len() {
            return Err(RestyleError::Checkpoint(format!(
                "parameter blob has {} values, expected {}",
                data.len(),
                model.params.total_len()
            )));
        }
        model.params.data_mut().copy_from_slice(&data);
        Ok(model)
    }
}

/// Stacks style vectors into a (batch, d_model) matrix.
pub(crate) fn style_matrix(styles: &[StyleVector]) -> Array2<f64> {
    let d = styles.first().map(|s| s.len()).unwrap_or(0);
    let mut m = Array2::zeros((styles.len(), d));
    for (b, s) in styles.iter().enumerate() {
        m.row_mut(b).assign(&s.values);
    }
    m
}
