//! Autoregressive decoding with per-layer key/value caches.

use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{argmax, softmax_vec};
use super::{FusedStates, Model};
use crate::corpus::{BOS, EOS, PAD};
use crate::error::{RestyleError, Result};
use crate::TokenSeq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub mode: DecodeMode,
    pub temperature: f64,
    pub max_len: usize,
}

impl DecodeOptions {
    pub fn greedy(max_len: usize) -> DecodeOptions {
        DecodeOptions { mode: DecodeMode::Greedy, temperature: 1.0, max_len }
    }

    pub fn sample(temperature: f64, max_len: usize) -> DecodeOptions {
        DecodeOptions { mode: DecodeMode::Sample, temperature, max_len }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == DecodeMode::Sample && !(self.temperature > 0.0) {
            return Err(RestyleError::Config(
                "sampling temperature must be positive".into(),
            ));
        }
        if self.max_len == 0 {
            return Err(RestyleError::Config("max_len must be positive".into()));
        }
        Ok(())
    }
}

/// Greedy or temperature decoding over a batch of fused encoder states.
/// Stops per example at EOS, globally at `max_len` tokens (capped by the
/// model's position table). Sampling draws one value per example per step
/// regardless of completion, so the consumed randomness depends only on the
/// batch shape.
pub(crate) fn generate_batch(
    model: &Model,
    fused: &FusedStates,
    options: &DecodeOptions,
    rng: &mut ChaCha8Rng,
) -> Vec<TokenSeq> {
    let params = &model.params;
    let sp = model.decoder_params();
    let (out_w, out_b) = model.out_ids();
    let config = model.config;
    let batch = fused.lens.len();
    let d = config.d_model;
    let heads = config.num_heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let max_len = options.max_len.min(config.max_seq_len);

    // Per-layer caches: self K/V grow a row per step; cross K/V are fixed.
    let n_layers = sp.blocks.len();
    let mut k_self = vec![Array2::<f64>::zeros((batch * max_len, d)); n_layers];
    let mut v_self = vec![Array2::<f64>::zeros((batch * max_len, d)); n_layers];
    let mut k_cross = Vec::with_capacity(n_layers);
    let mut v_cross = Vec::with_capacity(n_layers);
    for block in &sp.blocks {
        let (_, apc) = block.cross.as_ref().expect("decoder blocks cross-attend");
        k_cross.push(fused.states.dot(&params.mat(apc.wk)));
        v_cross.push(fused.states.dot(&params.mat(apc.wv)));
    }

    let tok_emb = params.mat(sp.tok_emb);
    let pos_emb = params.mat(sp.pos_emb);
    let mut outputs: Vec<TokenSeq> = vec![Vec::new(); batch];
    let mut done = vec![false; batch];
    let mut last = vec![BOS; batch];

    for t in 0..max_len {
        let mut x = Array2::zeros((batch, d));
        for b in 0..batch {
            let mut row = x.row_mut(b);
            row.assign(&tok_emb.row(last[b]));
            row += &pos_emb.row(t);
        }

        for (layer, block) in sp.blocks.iter().enumerate() {
            // Self-attention over the cached prefix.
            let (n1, _) = super::nn::ln_fwd(params, &block.ln1, &x);
            let q = n1.dot(&params.mat(block.attn.wq));
            let k_new = n1.dot(&params.mat(block.attn.wk));
            let v_new = n1.dot(&params.mat(block.attn.wv));
            for b in 0..batch {
                k_self[layer].row_mut(b * max_len + t).assign(&k_new.row(b));
                v_self[layer].row_mut(b * max_len + t).assign(&v_new.row(b));
            }
            let mut ctx = Array2::zeros((batch, d));
            for b in 0..batch {
                let keys = k_self[layer].slice(s![b * max_len..b * max_len + t + 1, ..]);
                let vals = v_self[layer].slice(s![b * max_len..b * max_len + t + 1, ..]);
                for h in 0..heads {
                    let qh = q.slice(s![b, h * dh..(h + 1) * dh]);
                    let kh = keys.slice(s![.., h * dh..(h + 1) * dh]);
                    let vh = vals.slice(s![.., h * dh..(h + 1) * dh]);
                    let mut scores: Vec<f64> =
                        kh.rows().into_iter().map(|k| k.dot(&qh) * scale).collect();
                    let probs = softmax_vec(&scores);
                    scores.clear();
                    let mut out = ctx.slice_mut(s![b, h * dh..(h + 1) * dh]);
                    for (p, vrow) in probs.iter().zip(vh.rows()) {
                        out.scaled_add(*p, &vrow);
                    }
                }
            }
            let x1 = &x + &ctx.dot(&params.mat(block.attn.wo));

            // Cross-attention over the fused encoder states.
            let (lnc, apc) = block.cross.as_ref().expect("decoder blocks cross-attend");
            let (nc, _) = super::nn::ln_fwd(params, lnc, &x1);
            let qc = nc.dot(&params.mat(apc.wq));
            let mut cctx = Array2::zeros((batch, d));
            let s_len = fused.s_len;
            for b in 0..batch {
                let valid = fused.lens[b];
                let keys = k_cross[layer].slice(s![b * s_len..b * s_len + valid, ..]);
                let vals = v_cross[layer].slice(s![b * s_len..b * s_len + valid, ..]);
                for h in 0..heads {
                    let qh = qc.slice(s![b, h * dh..(h + 1) * dh]);
                    let kh = keys.slice(s![.., h * dh..(h + 1) * dh]);
                    let vh = vals.slice(s![.., h * dh..(h + 1) * dh]);
                    let scores: Vec<f64> =
                        kh.rows().into_iter().map(|k| k.dot(&qh) * scale).collect();
                    let probs = softmax_vec(&scores);
                    let mut out = cctx.slice_mut(s![b, h * dh..(h + 1) * dh]);
                    for (p, vrow) in probs.iter().zip(vh.rows()) {
                        out.scaled_add(*p, &vrow);
                    }
                }
            }
            let x2 = &x1 + &cctx.dot(&params.mat(apc.wo));

            let (n2, _) = super::nn::ln_fwd(params, &block.ln2, &x2);
            let (f, _) = super::nn::ffn_fwd(params, &block.ffn, &n2);
            x = &x2 + &f;
        }

        let (h, _) = super::nn::ln_fwd(params, &sp.ln_f, &x);
        let mut logits = h.dot(&params.mat(out_w));
        {
            let ob = params.vec1(out_b);
            for mut row in logits.rows_mut() {
                row += &ob;
            }
        }

        for b in 0..batch {
            let mut row: Vec<f64> = logits.row(b).to_vec();
            row[PAD] = f64::NEG_INFINITY;
            row[BOS] = f64::NEG_INFINITY;
            let next = match options.mode {
                DecodeMode::Greedy => {
                    // Consume nothing from the RNG in greedy mode.
                    argmax(&row)
                }
                DecodeMode::Sample => {
                    for v in row.iter_mut() {
                        *v /= options.temperature;
                    }
                    let probs = softmax_vec(&row);
                    let draw: f64 = rng.random::<f64>();
                    let mut acc = 0.0;
                    let mut chosen = probs.len() - 1;
                    for (i, p) in probs.iter().enumerate() {
                        acc += p;
                        if draw < acc {
                            chosen = i;
                            break;
                        }
                    }
                    chosen
                }
            };
            if done[b] {
                last[b] = PAD;
                continue;
            }
            if next == EOS {
                done[b] = true;
                last[b] = PAD;
            } else {
                outputs[b].push(next);
                last[b] = next;
            }
        }
        if done.iter().all(|&d| d) {
            break;
        }
    }
    outputs
}
