//! A transformer stack: embeddings, pre-norm blocks, final layer norm.
//! One definition serves all three roles — the style extractor and encoder
//! are plain bidirectional stacks, the decoder adds causal masking and
//! cross-attention.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::nn::{
    attn_bwd, attn_fwd, ffn_bwd, ffn_fwd, ln_bwd, ln_fwd, AttnCache, AttnParams, FfnCache,
    FfnParams, LnCache, LnParams,
};
use super::params::{Grads, ParamBuilder, ParamId, Params};
use super::ModelConfig;
use crate::corpus::PAD;
use crate::TokenSeq;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct BlockParams {
    pub ln1: LnParams,
    pub attn: AttnParams,
    /// Decoder blocks carry a (norm, attention) pair for cross-attention.
    pub cross: Option<(LnParams, AttnParams)>,
    pub ln2: LnParams,
    pub ffn: FfnParams,
}

#[derive(Debug, Clone)]
pub struct StackParams {
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    pub blocks: Vec<BlockParams>,
    pub ln_f: LnParams,
    pub causal: bool,
    pub heads: usize,
}

impl StackParams {
    pub fn build(
        b: &mut ParamBuilder,
        prefix: &str,
        config: &ModelConfig,
        causal: bool,
        has_cross: bool,
    ) -> StackParams {
        let d = config.d_model;
        let ln = |b: &mut ParamBuilder, name: String| LnParams {
            gamma: b.add(format!("{name}.gamma"), 1, d),
            beta: b.add(format!("{name}.beta"), 1, d),
        };
        let attn = |b: &mut ParamBuilder, name: String| AttnParams {
            wq: b.add(format!("{name}.wq"), d, d),
            wk: b.add(format!("{name}.wk"), d, d),
            wv: b.add(format!("{name}.wv"), d, d),
            wo: b.add(format!("{name}.wo"), d, d),
        };
        let tok_emb = b.add(format!("{prefix}.tok_emb"), config.vocab_size, d);
        let pos_emb = b.add(format!("{prefix}.pos_emb"), config.max_seq_len, d);
        let blocks = (0..config.num_layers)
            .map(|i| BlockParams {
                ln1: ln(b, format!("{prefix}.block{i}.ln1")),
                attn: attn(b, format!("{prefix}.block{i}.attn")),
                cross: has_cross.then(|| {
                    (
                        ln(b, format!("{prefix}.block{i}.ln_cross")),
                        attn(b, format!("{prefix}.block{i}.cross")),
                    )
                }),
                ln2: ln(b, format!("{prefix}.block{i}.ln2")),
                ffn: FfnParams {
                    w1: b.add(format!("{prefix}.block{i}.ffn.w1"), d, config.ffn_dim),
                    b1: b.add(format!("{prefix}.block{i}.ffn.b1"), 1, config.ffn_dim),
                    w2: b.add(format!("{prefix}.block{i}.ffn.w2"), config.ffn_dim, d),
                    b2: b.add(format!("{prefix}.block{i}.ffn.b2"), 1, d),
                },
            })
            .collect();
        let ln_f = ln(b, format!("{prefix}.ln_f"));
        StackParams { tok_emb, pos_emb, blocks, ln_f, causal, heads: config.num_heads }
    }

    pub fn init(&self, params: &mut Params, rng: &mut ChaCha8Rng) {
        params.init_normal(self.tok_emb, INIT_STD, rng);
        params.init_normal(self.pos_emb, INIT_STD, rng);
        for block in &self.blocks {
            for ap in std::iter::once(&block.attn).chain(block.cross.iter().map(|(_, a)| a)) {
                for id in [ap.wq, ap.wk, ap.wv, ap.wo] {
                    params.init_normal(id, INIT_STD, rng);
                }
            }
            for ln in [&block.ln1, &block.ln2]
                .into_iter()
                .chain(block.cross.iter().map(|(l, _)| l))
            {
                params.init_const(ln.gamma, 1.0);
                params.init_const(ln.beta, 0.0);
            }
            params.init_normal(block.ffn.w1, INIT_STD, rng);
            params.init_const(block.ffn.b1, 0.0);
            params.init_normal(block.ffn.w2, INIT_STD, rng);
            params.init_const(block.ffn.b2, 0.0);
        }
        params.init_const(self.ln_f.gamma, 1.0);
        params.init_const(self.ln_f.beta, 0.0);
    }
}

pub struct BlockCache {
    ln1: LnCache,
    attn: AttnCache,
    cross: Option<(LnCache, AttnCache)>,
    ln2: LnCache,
    ffn: FfnCache,
}

pub struct StackCache {
    flat_tokens: Vec<usize>,
    pub t_pad: usize,
    pub batch: usize,
    blocks: Vec<BlockCache>,
    ln_f: LnCache,
}

/// Encoder states handed to cross-attention: example-major rows plus the
/// per-example count of valid (prefix) positions.
pub struct CrossInput<'a> {
    pub states: &'a Array2<f64>,
    pub s_len: usize,
    pub lens: &'a [usize],
}

/// Runs the stack over right-padded sequences. `t_pad` must be
/// `max(lens) > 0`. Returns final hidden states, `batch * t_pad` rows.
pub fn stack_fwd(
    params: &Params,
    sp: &StackParams,
    tokens: &[TokenSeq],
    t_pad: usize,
    cross: Option<CrossInput<'_>>,
) -> (Array2<f64>, StackCache) {
    let batch = tokens.len();
    let d = params.entry(sp.tok_emb).cols;
    let lens: Vec<usize> = tokens.iter().map(|t| t.len()).collect();
    let mut flat_tokens = vec![PAD; batch * t_pad];
    for (b, seq) in tokens.iter().enumerate() {
        flat_tokens[b * t_pad..b * t_pad + seq.len()].copy_from_slice(seq);
    }

    let tok_emb = params.mat(sp.tok_emb);
    let pos_emb = params.mat(sp.pos_emb);
    let mut x = Array2::zeros((batch * t_pad, d));
    for (row, &tok) in flat_tokens.iter().enumerate() {
        let t = row % t_pad;
        let mut out = x.row_mut(row);
        out.assign(&tok_emb.row(tok));
        out += &pos_emb.row(t);
    }

    let mut blocks = Vec::with_capacity(sp.blocks.len());
    for block in &sp.blocks {
        let (n1, c_ln1) = ln_fwd(params, &block.ln1, &x);
        let (a, c_attn) = attn_fwd(
            params, &block.attn, &n1, &n1, batch, t_pad, t_pad, &lens, sp.causal, sp.heads,
        );
        let x1 = &x + &a;
        let (x2, c_cross) = match (&block.cross, &cross) {
            (Some((lnc, apc)), Some(ci)) => {
                let (nc, c_lnc) = ln_fwd(params, lnc, &x1);
                let (c, c_att) = attn_fwd(
                    params, apc, &nc, ci.states, batch, t_pad, ci.s_len, ci.lens, false, sp.heads,
                );
                (&x1 + &c, Some((c_lnc, c_att)))
            }
            _ => (x1, None),
        };
        let (n2, c_ln2) = ln_fwd(params, &block.ln2, &x2);
        let (f, c_ffn) = ffn_fwd(params, &block.ffn, &n2);
        x = &x2 + &f;
        blocks.push(BlockCache { ln1: c_ln1, attn: c_attn, cross: c_cross, ln2: c_ln2, ffn: c_ffn });
    }
    let (h, c_lnf) = ln_fwd(params, &sp.ln_f, &x);
    (h, StackCache { flat_tokens, t_pad, batch, blocks, ln_f: c_lnf })
}

/// Backward through the stack. Returns the gradient flowing into the
/// cross-attended states, when the stack has cross-attention.
pub fn stack_bwd(
    params: &Params,
    sp: &StackParams,
    cache: &StackCache,
    dh: &Array2<f64>,
    grads: &mut Grads,
) -> Option<Array2<f64>> {
    let mut dx = ln_bwd(params, &sp.ln_f, &cache.ln_f, dh, grads);
    let mut dcross: Option<Array2<f64>> = None;
    for (block, bc) in sp.blocks.iter().zip(&cache.blocks).rev() {
        // out = x2 + ffn(ln2(x2))
        let dffn = ffn_bwd(params, &block.ffn, &bc.ffn, &dx, grads);
        let dx2 = &dx + &ln_bwd(params, &block.ln2, &bc.ln2, &dffn, grads);
        // x2 = x1 + cross(ln_c(x1), enc)
        let dx1 = match (&block.cross, &bc.cross) {
            (Some((lnc, apc)), Some((c_lnc, c_att))) => {
                let (dnc, denc) = attn_bwd(params, apc, c_att, &dx2, grads);
                match &mut dcross {
                    Some(acc) => *acc += &denc,
                    None => dcross = Some(denc),
                }
                &dx2 + &ln_bwd(params, lnc, c_lnc, &dnc, grads)
            }
            _ => dx2,
        };
        // x1 = x + attn(ln1(x))
        let (dnq, dnkv) = attn_bwd(params, &block.attn, &bc.attn, &dx1, grads);
        let dn1 = &dnq + &dnkv;
        dx = &dx1 + &ln_bwd(params, &block.ln1, &bc.ln1, &dn1, grads);
    }

    // Embedding scatter. Padded rows carry exactly zero gradient, so adding
    // them onto the PAD row is a no-op.
    {
        let mut dtok = grads.mat_mut(params, sp.tok_emb);
        for (row, &tok) in cache.flat_tokens.iter().enumerate() {
            let src = dx.row(row);
            let mut dst = dtok.row_mut(tok);
            dst += &src;
        }
    }
    {
        let mut dpos = grads.mat_mut(params, sp.pos_emb);
        for row in 0..cache.batch * cache.t_pad {
            let t = row % cache.t_pad;
            let src = dx.row(row);
            let mut dst = dpos.row_mut(t);
            dst += &src;
        }
    }
    dcross
}
