//! Tape-free forward pass for inference.
//!
//! Same arithmetic as [`forward`](super::forward), in the same order, but
//! the local block runs one patch at a time on small scratch buffers and
//! nothing is retained for a backward pass. The working set stays
//! constant as `L` grows, so wall time tracks the operation count.

use super::config::ModelConfig;
use super::forward::LAYER_NORM_EPS;
use super::params::{BlockWeights, GruWeights, TwinFormerParams};
use crate::attention::AttentionConfig;
use crate::error::{Error, Result};
use crate::numerics::kernels::{
    add_bias_rows, layer_norm_rows, matmul, softmax_rows, topk_keep, transpose,
};
use crate::numerics::{sigmoid, Tensor};

fn ensure_finite(stage: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(bad) => Err(Error::Numeric(format!(
            "{stage} produced non-finite value {bad}"
        ))),
        None => Ok(()),
    }
}

/// Multi-head sparse attention over all `n` rows of `z: [n × d]`.
fn attention(
    z: &[f64],
    n: usize,
    w: &BlockWeights<Tensor>,
    attn: &AttentionConfig,
) -> Result<Vec<f64>> {
    let d = attn.d_model;
    let dk = attn.head_dim();
    let q = matmul(z, w.attn.w_q.data(), n, d, d);
    let k = matmul(z, w.attn.w_k.data(), n, d, d);
    let v = matmul(z, w.attn.w_v.data(), n, d, d);
    let scale = 1.0 / (dk as f64).sqrt();
    let columns = |m: &[f64], h: usize| -> Vec<f64> {
        m.chunks_exact(d)
            .flat_map(|row| &row[h * dk..(h + 1) * dk])
            .copied()
            .collect()
    };
    let mut mixed = vec![0.0; n * d];
    for h in 0..attn.heads {
        let (qh, kh, vh) = (columns(&q, h), columns(&k, h), columns(&v, h));
        let kt = transpose(&kh, n, dk);
        let mut logits = matmul(&qh, &kt, n, dk, n);
        logits.iter_mut().for_each(|x| *x *= scale);
        ensure_finite("attention logits", &logits)?;
        if attn.top_k < n {
            for row in logits.chunks_exact_mut(n) {
                let keep = topk_keep(row, attn.top_k);
                for (x, kept) in row.iter_mut().zip(keep) {
                    if !kept {
                        *x = f64::NEG_INFINITY;
                    }
                }
            }
        }
        let weights = softmax_rows(&logits, n)?;
        let out = matmul(&weights, &vh, n, n, dk);
        for (dst, src) in mixed.chunks_exact_mut(d).zip(out.chunks_exact(dk)) {
            dst[h * dk..(h + 1) * dk].copy_from_slice(src);
        }
    }
    Ok(matmul(&mixed, w.attn.w_o.data(), n, d, d))
}

/// One attention + FFN block over `z: [n × d]`.
fn block(
    z: &[f64],
    n: usize,
    w: &BlockWeights<Tensor>,
    attn: &AttentionConfig,
) -> Result<Vec<f64>> {
    let d = attn.d_model;
    let a = attention(z, n, w, attn)?;
    let z1: Vec<f64> = z.iter().zip(&a).map(|(x, y)| x + y).collect();
    let (normed, _, _) = layer_norm_rows(&z1, w.ln_gamma.data(), w.ln_beta.data(), LAYER_NORM_EPS);
    let width = w.ffn_b1.numel();
    let mut hidden = matmul(&normed, w.ffn_w1.data(), n, d, width);
    add_bias_rows(&mut hidden, w.ffn_b1.data());
    hidden.iter_mut().for_each(|x| *x = x.max(0.0));
    let mut f = matmul(&hidden, w.ffn_w2.data(), n, width, d);
    add_bias_rows(&mut f, w.ffn_b2.data());
    Ok(z1.iter().zip(&f).map(|(x, y)| x + y).collect())
}

fn gru(seq: &[f64], d: usize, w: &GruWeights<Tensor>) -> Vec<f64> {
    let two_d = 2 * d;
    let w_r = transpose(w.w_r.data(), d, two_d);
    let w_z = transpose(w.w_z.data(), d, two_d);
    let w_h = transpose(w.w_h.data(), d, two_d);
    let gate = |input: &[f64], wt: &[f64], b: &Tensor| {
        let mut out = matmul(input, wt, 1, two_d, d);
        add_bias_rows(&mut out, b.data());
        out
    };
    let mut h = vec![0.0; d];
    let mut hx = vec![0.0; two_d];
    for x in seq.chunks_exact(d) {
        hx[..d].copy_from_slice(&h);
        hx[d..].copy_from_slice(x);
        let r: Vec<f64> = gate(&hx, &w_r, &w.b_r).into_iter().map(sigmoid).collect();
        let z: Vec<f64> = gate(&hx, &w_z, &w.b_z).into_iter().map(sigmoid).collect();
        for j in 0..d {
            hx[j] = r[j] * h[j];
        }
        let cand: Vec<f64> = gate(&hx, &w_h, &w.b_h).into_iter().map(f64::tanh).collect();
        for j in 0..d {
            let keep = h[j] - z[j] * h[j];
            h[j] = keep + z[j] * cand[j];
        }
    }
    h
}

/// Forecast `[H]` for one normalized window `[L × F]`.
pub fn infer(params: &TwinFormerParams, cfg: &ModelConfig, window: &Tensor) -> Result<Tensor> {
    if window.shape() != [cfg.seq_len, cfg.n_features] {
        return Err(Error::shape(
            "forward",
            format!(
                "window {:?} does not match [seq_len={}, n_features={}]",
                window.shape(),
                cfg.seq_len,
                cfg.n_features
            ),
        ));
    }
    let attn = cfg.attention();
    let (d, p, f) = (cfg.d_model, cfg.patch_len, cfg.n_features);
    let n_patches = cfg.num_patches();
    let mut pooled = vec![0.0; n_patches * d];
    for (patch, token) in pooled.chunks_exact_mut(d).enumerate() {
        let rows = &window.data()[patch * p * f..(patch + 1) * p * f];
        let mut z = matmul(rows, params.embed_w.data(), p, f, d);
        add_bias_rows(&mut z, params.embed_b.data());
        ensure_finite("embedding", &z)?;
        let out = block(&z, p, &params.local, &attn)?;
        for row in out.chunks_exact(d) {
            token.iter_mut().zip(row).for_each(|(t, v)| *t += v);
        }
        let scale = 1.0 / p as f64;
        token.iter_mut().for_each(|t| *t *= scale);
    }
    ensure_finite("local block", &pooled)?;
    let global = block(&pooled, n_patches, &params.global, &attn)?;
    ensure_finite("global block", &global)?;
    let h = gru(&global, d, &params.gru);
    let mut y = matmul(&h, params.head_w.data(), 1, d, cfg.horizon);
    add_bias_rows(&mut y, params.head_b.data());
    ensure_finite("forecast head", &y)?;
    Tensor::vector(y)
}
