use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{PatchSequence, Tensor};

/// Projection weights of one attention layer, each (out, in, 1, 1).
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub wq: &'a Tensor,
    pub bq: Option<&'a [f32]>,
    pub wk: &'a Tensor,
    pub bk: Option<&'a [f32]>,
    pub wv: &'a Tensor,
    pub bv: Option<&'a [f32]>,
    pub wo: &'a Tensor,
    pub bo: Option<&'a [f32]>,
}

/// Token-wise affine map `y = W x + b` with `W` stored as (out, in, 1, 1).
pub fn linear(seq: &PatchSequence, weight: &Tensor, bias: Option<&[f32]>) -> Result<PatchSequence> {
    let ws = weight.shape();
    let (out_dim, in_dim) = (ws.batch, ws.channels);
    if in_dim != seq.dim || ws.height != 1 || ws.width != 1 {
        return Err(Error::dim("linear", format!("weights {ws} cannot map tokens of dim {}", seq.dim)));
    }
    if let Some(b) = bias {
        if b.len() != out_dim {
            return Err(Error::dim("linear", format!("bias has {} entries for {out_dim} outputs", b.len())));
        }
    }
    let tokens = seq.data.len() / in_dim.max(1);
    let mut out = vec![0f32; tokens * out_dim];
    let w = weight.data();
    out.par_chunks_mut(out_dim.max(1)).zip(seq.data.par_chunks(in_dim.max(1))).for_each(|(dst, x)| {
        for (o, d) in dst.iter_mut().enumerate() {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            let mut acc = bias.map_or(0.0, |b| b[o] as f64);
            for (&wi, &xi) in row.iter().zip(x) {
                acc += wi as f64 * xi as f64;
            }
            *d = acc as f32;
        }
    });
    Ok(seq.same_layout(out, out_dim))
}

pub fn multihead_self_attention(
    seq: &PatchSequence,
    weights: &AttentionWeights<'_>,
    heads: usize,
) -> Result<PatchSequence> {
    attend(seq, weights, heads, false).map(|(out, _)| out)
}

/// Same as [`multihead_self_attention`], also returning the softmax
/// probabilities laid out as (sequence, head, query, key).
pub fn multihead_self_attention_with_probs(
    seq: &PatchSequence,
    weights: &AttentionWeights<'_>,
    heads: usize,
) -> Result<(PatchSequence, Vec<f32>)> {
    attend(seq, weights, heads, true)
}

fn attend(
    seq: &PatchSequence,
    w: &AttentionWeights<'_>,
    heads: usize,
    keep_probs: bool,
) -> Result<(PatchSequence, Vec<f32>)> {
    let d = w.wq.shape().batch;
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::Config(format!("embedding dim {d} cannot be split into {heads} heads")));
    }
    let q = linear(seq, w.wq, w.bq)?;
    let k = linear(seq, w.wk, w.bk)?;
    let v = linear(seq, w.wv, w.bv)?;
    if k.dim != d || v.dim != d {
        return Err(Error::dim("attention", format!("q/k/v widths {d}/{}/{} differ", k.dim, v.dim)));
    }
    let len = seq.tokens();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let n_seq = seq.sequences();

    // One job per (sequence, head); each writes its own column slice later.
    let jobs: Vec<(Vec<f64>, Vec<f32>)> = (0..n_seq * heads)
        .into_par_iter()
        .map(|job| {
            let (s, h) = (job / heads, job % heads);
            let base = s * len * d + h * dh;
            let mut ctx = vec![0f64; len * dh];
            let mut probs = if keep_probs { vec![0f32; len * len] } else { Vec::new() };
            let mut logits = vec![0f64; len];
            for i in 0..len {
                let qi = &q.data[base + i * d..base + i * d + dh];
                let mut max = f64::NEG_INFINITY;
                for (j, l) in logits.iter_mut().enumerate() {
                    let kj = &k.data[base + j * d..base + j * d + dh];
                    let dot: f64 = qi.iter().zip(kj).map(|(&a, &b)| a as f64 * b as f64).sum();
                    *l = dot * scale;
                    max = max.max(*l);
                }
                let mut total = 0.0;
                for l in logits.iter_mut() {
                    *l = (*l - max).exp();
                    total += *l;
                }
                let row = &mut ctx[i * dh..(i + 1) * dh];
                for (j, l) in logits.iter().enumerate() {
                    let p = l / total;
                    if keep_probs {
                        probs[i * len + j] = p as f32;
                    }
                    let vj = &v.data[base + j * d..base + j * d + dh];
                    for (r, &vv) in row.iter_mut().zip(vj) {
                        *r += p * vv as f64;
                    }
                }
            }
            (ctx, probs)
        })
        .collect();

    let mut merged = vec![0f32; n_seq * len * d];
    let mut all_probs = Vec::with_capacity(if keep_probs { n_seq * heads * len * len } else { 0 });
    for (job, (ctx, probs)) in jobs.into_iter().enumerate() {
        let (s, h) = (job / heads, job % heads);
        for i in 0..len {
            let dst = s * len * d + i * d + h * dh;
            for (m, &c) in merged[dst..dst + dh].iter_mut().zip(&ctx[i * dh..(i + 1) * dh]) {
                *m = c as f32;
            }
        }
        all_probs.extend(probs);
    }
    let out = linear(&seq.same_layout(merged, d), w.wo, w.bo)?;
    Ok((out, all_probs))
}
