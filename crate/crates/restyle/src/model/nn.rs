//! Transformer building blocks: layer norm, multi-head attention, and the
//! feed-forward layer, each with a hand-derived backward pass.
//!
//! Activations are `Array2<f64>` with `batch * time` rows (example-major
//! blocks) and `d_model` columns. Per-example valid lengths travel alongside;
//! padded key positions are masked out of every softmax, so padding cannot
//! leak into real positions.

use ndarray::{s, Array2, Axis};

use super::params::{Grads, ParamId, Params};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct LnParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

pub struct LnCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

pub fn ln_fwd(params: &Params, ln: &LnParams, x: &Array2<f64>) -> (Array2<f64>, LnCache) {
    let gamma = params.vec1(ln.gamma);
    let beta = params.vec1(ln.beta);
    let d = x.ncols();
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / d as f64;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| v * istd);
        inv_std.push(istd);
    }
    let mut y = xhat.clone();
    for mut row in y.rows_mut() {
        row.zip_mut_with(&gamma, |v, g| *v *= g);
        row += &beta;
    }
    (y, LnCache { xhat, inv_std })
}

pub fn ln_bwd(
    params: &Params,
    ln: &LnParams,
    cache: &LnCache,
    dy: &Array2<f64>,
    grads: &mut Grads,
) -> Array2<f64> {
    let gamma = params.vec1(ln.gamma).to_owned();
    let d = dy.ncols() as f64;

    // Parameter grads.
    {
        let mut dgamma = grads.mat_mut(params, ln.gamma);
        for (row_dy, row_xhat) in dy.rows().into_iter().zip(cache.xhat.rows()) {
            for j in 0..dy.ncols() {
                dgamma[[0, j]] += row_dy[j] * row_xhat[j];
            }
        }
    }
    {
        let mut dbeta = grads.mat_mut(params, ln.beta);
        for row_dy in dy.rows() {
            for j in 0..dy.ncols() {
                dbeta[[0, j]] += row_dy[j];
            }
        }
    }

    // Input grad, row by row.
    let mut dx = Array2::zeros(dy.raw_dim());
    for (i, row_dy) in dy.rows().into_iter().enumerate() {
        let xhat = cache.xhat.row(i);
        let istd = cache.inv_std[i];
        let dxhat: Vec<f64> = row_dy.iter().zip(&gamma).map(|(g, w)| g * w).collect();
        let mean_dxhat: f64 = dxhat.iter().sum::<f64>() / d;
        let mean_dxhat_xhat: f64 =
            dxhat.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        let mut out = dx.row_mut(i);
        for j in 0..dxhat.len() {
            out[j] = istd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
    }
    dx
}

#[derive(Debug, Clone, Copy)]
pub struct AttnParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

pub struct AttnCache {
    xq: Array2<f64>,
    xkv: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    ctx: Array2<f64>,
    /// Softmax matrices, one per (example, head), row-major over examples.
    attn: Vec<Array2<f64>>,
    batch: usize,
    tq: usize,
    tk: usize,
    heads: usize,
}

/// Multi-head scaled dot-product attention.
///
/// `xq` has `batch * tq` rows, `xkv` has `batch * tk` rows. Key position `s`
/// of example `b` participates iff `s < kv_lens[b]`; `causal` additionally
/// restricts self-attention to keys at or before the query position. Query
/// rows whose key set is empty produce zero context.
#[allow(clippy::too_many_arguments)]
pub fn attn_fwd(
    params: &Params,
    ap: &AttnParams,
    xq: &Array2<f64>,
    xkv: &Array2<f64>,
    batch: usize,
    tq: usize,
    tk: usize,
    kv_lens: &[usize],
    causal: bool,
    heads: usize,
) -> (Array2<f64>, AttnCache) {
    let d = xq.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = xq.dot(&params.mat(ap.wq));
    let k = xkv.dot(&params.mat(ap.wk));
    let v = xkv.dot(&params.mat(ap.wv));
    let mut ctx = Array2::zeros((batch * tq, d));
    let mut attn = Vec::with_capacity(batch * heads);
    for b in 0..batch {
        let klen = kv_lens[b];
        for h in 0..heads {
            let qb = q.slice(s![b * tq..(b + 1) * tq, h * dh..(h + 1) * dh]);
            let kb = k.slice(s![b * tk..(b + 1) * tk, h * dh..(h + 1) * dh]);
            let vb = v.slice(s![b * tk..(b + 1) * tk, h * dh..(h + 1) * dh]);
            let mut scores = qb.dot(&kb.t());
            scores.mapv_inplace(|x| x * scale);
            for t in 0..tq {
                let limit = if causal { klen.min(t + 1) } else { klen };
                let mut row = scores.row_mut(t);
                softmax_prefix_inplace(&mut row, limit);
            }
            let a = scores;
            let ctx_bh = a.dot(&vb);
            ctx.slice_mut(s![b * tq..(b + 1) * tq, h * dh..(h + 1) * dh])
                .assign(&ctx_bh);
            attn.push(a);
        }
    }
    let out = ctx.dot(&params.mat(ap.wo));
    (
        out,
        AttnCache {
            xq: xq.clone(),
            xkv: xkv.clone(),
            q,
            k,
            v,
            ctx,
            attn,
            batch,
            tq,
            tk,
            heads,
        },
    )
}

/// Softmax over the first `limit` entries of a row; the rest become zero.
/// A zero limit zeroes the whole row.
fn softmax_prefix_inplace(row: &mut ndarray::ArrayViewMut1<'_, f64>, limit: usize) {
    if limit == 0 {
        row.fill(0.0);
        return;
    }
    let mut max = f64::NEG_INFINITY;
    for i in 0..limit {
        max = max.max(row[i]);
    }
    let mut sum = 0.0;
    for i in 0..limit {
        let e = (row[i] - max).exp();
        row[i] = e;
        sum += e;
    }
    for i in 0..limit {
        row[i] /= sum;
    }
    for i in limit..row.len() {
        row[i] = 0.0;
    }
}

/// Backward pass; returns (d_xq, d_xkv). For self-attention the caller adds
/// them together.
pub fn attn_bwd(
    params: &Params,
    ap: &AttnParams,
    cache: &AttnCache,
    dy: &Array2<f64>,
    grads: &mut Grads,
) -> (Array2<f64>, Array2<f64>) {
    let d = dy.ncols();
    let heads = cache.heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (batch, tq, tk) = (cache.batch, cache.tq, cache.tk);

    // Output projection.
    let dctx = dy.dot(&params.mat(ap.wo).t());
    grads
        .mat_mut(params, ap.wo)
        .scaled_add(1.0, &cache.ctx.t().dot(dy));

    let mut dq = Array2::zeros((batch * tq, d));
    let mut dk = Array2::zeros((batch * tk, d));
    let mut dv = Array2::zeros((batch * tk, d));
    for b in 0..batch {
        for h in 0..heads {
            let a = &cache.attn[b * heads + h];
            let dctx_bh = dctx.slice(s![b * tq..(b + 1) * tq, h * dh..(h + 1) * dh]);
            let kb = cache.k.slice(s![b * tk..(b + 1) * tk, h * dh..(h + 1) * dh]);
            let vb = cache.v.slice(s![b * tk..(b + 1) * tk, h * dh..(h + 1) * dh]);
            let qb = cache.q.slice(s![b * tq..(b + 1) * tq, h * dh..(h + 1) * dh]);
            let da = dctx_bh.dot(&vb.t());
            let dv_bh = a.t().dot(&dctx_bh);
            // Softmax backward: rows of `a` outside the valid prefix are zero,
            // which zeroes their gradient contribution automatically.
            let row_dots: Vec<f64> = da
                .rows()
                .into_iter()
                .zip(a.rows())
                .map(|(drow, arow)| drow.iter().zip(arow.iter()).map(|(x, y)| x * y).sum())
                .collect();
            let mut ds = da.to_owned();
            for (i, mut row) in ds.rows_mut().into_iter().enumerate() {
                let arow = a.row(i);
                for j in 0..row.len() {
                    row[j] = arow[j] * (row[j] - row_dots[i]);
                }
            }
            ds.mapv_inplace(|x| x * scale);
            let dq_bh = ds.dot(&kb);
            let dk_bh = ds.t().dot(&qb);
            dq.slice_mut(s![b * tq..(b + 1) * tq, h * dh..(h + 1) * dh])
                .assign(&dq_bh);
            dk.slice_mut(s![b * tk..(b + 1) * tk, h * dh..(h + 1) * dh])
                .assign(&dk_bh);
            dv.slice_mut(s![b * tk..(b + 1) * tk, h * dh..(h + 1) * dh])
                .assign(&dv_bh);
        }
    }

    grads
        .mat_mut(params, ap.wq)
        .scaled_add(1.0, &cache.xq.t().dot(&dq));
    grads
        .mat_mut(params, ap.wk)
        .scaled_add(1.0, &cache.xkv.t().dot(&dk));
    grads
        .mat_mut(params, ap.wv)
        .scaled_add(1.0, &cache.xkv.t().dot(&dv));

    let dxq = dq.dot(&params.mat(ap.wq).t());
    let dxkv = dk.dot(&params.mat(ap.wk).t()) + dv.dot(&params.mat(ap.wv).t());
    (dxq, dxkv)
}

#[derive(Debug, Clone, Copy)]
pub struct FfnParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

pub struct FfnCache {
    x: Array2<f64>,
    hidden: Array2<f64>,
}

pub fn ffn_fwd(params: &Params, fp: &FfnParams, x: &Array2<f64>) -> (Array2<f64>, FfnCache) {
    let mut hidden = x.dot(&params.mat(fp.w1));
    let b1 = params.vec1(fp.b1);
    for mut row in hidden.rows_mut() {
        row += &b1;
    }
    hidden.mapv_inplace(|v| v.max(0.0));
    let mut y = hidden.dot(&params.mat(fp.w2));
    let b2 = params.vec1(fp.b2);
    for mut row in y.rows_mut() {
        row += &b2;
    }
    (y, FfnCache { x: x.clone(), hidden })
}

pub fn ffn_bwd(
    params: &Params,
    fp: &FfnParams,
    cache: &FfnCache,
    dy: &Array2<f64>,
    grads: &mut Grads,
) -> Array2<f64> {
    grads
        .mat_mut(params, fp.w2)
        .scaled_add(1.0, &cache.hidden.t().dot(dy));
    {
        let db2_acc = dy.sum_axis(Axis(0));
        let mut db2 = grads.mat_mut(params, fp.b2);
        for j in 0..db2_acc.len() {
            db2[[0, j]] += db2_acc[j];
        }
    }
    let mut dh = dy.dot(&params.mat(fp.w2).t());
    dh.zip_mut_with(&cache.hidden, |g, &h| {
        if h <= 0.0 {
            *g = 0.0;
        }
    });
    grads
        .mat_mut(params, fp.w1)
        .scaled_add(1.0, &cache.x.t().dot(&dh));
    {
        let db1_acc = dh.sum_axis(Axis(0));
        let mut db1 = grads.mat_mut(params, fp.b1);
        for j in 0..db1_acc.len() {
            db1[[0, j]] += db1_acc[j];
        }
    }
    dh.dot(&params.mat(fp.w1).t())
}

/// Row-wise softmax cross-entropy against integer labels.
///
/// Returns the summed loss over rows with `weight > 0` and writes
/// `weight * (softmax - onehot)` into `dlogits` when requested.
pub fn cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
    weights: &[f64],
    mut dlogits: Option<&mut Array2<f64>>,
) -> f64 {
    let mut total = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in row {
            sum += (v - max).exp();
        }
        let lse = max + sum.ln();
        total += w * (lse - row[labels[i]]);
        if let Some(dl) = dlogits.as_deref_mut() {
            let mut drow = dl.row_mut(i);
            for (j, &v) in row.iter().enumerate() {
                drow[j] += w * ((v - max).exp() / sum);
            }
            drow[labels[i]] -= w;
        }
    }
    total
}

/// Numerically stable softmax of a logit slice (used by decoding).
pub fn softmax_vec(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
