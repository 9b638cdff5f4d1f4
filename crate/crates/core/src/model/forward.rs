//! Forward pass stages. Each stage records onto the caller's tape.

use super::config::ModelConfig;
use super::params::{BlockWeights, GruWeights, TwinFormerWeights};
use crate::attention::{multi_head_csa_segmented, AttentionConfig};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `x · W_e + b_e` for `x: [L × F]`.
pub fn embed(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let z = tape.matmul(x, w)?;
    tape.add_bias(z, b)
}

/// Splits `z: [L × d]` into `floor(L/P)` chronological patches `[N_p × P × d]`,
/// dropping the trailing `L mod P` rows.
pub fn patchify(tape: &mut Tape, z: Var, patch_len: usize) -> Result<Var> {
    let shape = tape.shape(z).to_vec();
    let [len, d] = shape[..] else {
        return Err(Error::shape(
            "patchify",
            format!("expected [L×d], got {shape:?}"),
        ));
    };
    if patch_len < 1 || patch_len > len {
        return Err(Error::Config(format!(
            "patch length {patch_len} must be between 1 and {len}"
        )));
    }
    let n_patches = len / patch_len;
    let used = n_patches * patch_len;
    let kept = if used == len {
        z
    } else {
        tape.slice(z, 0, 0, used)?
    };
    tape.reshape(kept, &[n_patches, patch_len, d])
}

fn ffn(tape: &mut Tape, u: Var, w: &BlockWeights<Var>) -> Result<Var> {
    let h = tape.matmul(u, w.ffn_w1)?;
    let h = tape.add_bias(h, w.ffn_b1)?;
    let h = tape.relu(h)?;
    let o = tape.matmul(h, w.ffn_w2)?;
    tape.add_bias(o, w.ffn_b2)
}

/// `Z¹ = Z + MHCSA(Z)`, `Z² = Z¹ + FFN(LayerNorm(Z¹))` on `[n × d]` rows,
/// with attention confined to segments of `segment` rows.
fn informer_block(
    tape: &mut Tape,
    z: Var,
    w: &BlockWeights<Var>,
    attn: &AttentionConfig,
    segment: usize,
) -> Result<Var> {
    let a = multi_head_csa_segmented(tape, z, &w.attn, attn, segment)?;
    let z1 = tape.add(z, a)?;
    let normed = tape.layer_norm(z1, w.ln_gamma, w.ln_beta, LAYER_NORM_EPS)?;
    let f = ffn(tape, normed, w)?;
    tape.add(z1, f)
}

/// Shared block applied independently inside each patch of
/// `patches: [N_p × P × d]`.
pub fn local_informer(
    tape: &mut Tape,
    patches: Var,
    w: &BlockWeights<Var>,
    attn: &AttentionConfig,
) -> Result<Var> {
    let shape = tape.shape(patches).to_vec();
    let [n_patches, patch_len, d] = shape[..] else {
        return Err(Error::shape(
            "local_informer",
            format!("expected [N_p×P×d], got {shape:?}"),
        ));
    };
    let rows = tape.reshape(patches, &[n_patches * patch_len, d])?;
    let out = informer_block(tape, rows, w, attn, patch_len)?;
    tape.reshape(out, &[n_patches, patch_len, d])
}

/// Mean over the time axis of each patch: `[N_p × P × d] → [N_p × d]`.
pub fn mean_pool(tape: &mut Tape, patches: Var) -> Result<Var> {
    if tape.shape(patches).len() != 3 {
        return Err(Error::shape(
            "mean_pool",
            format!("expected [N_p×P×d], got {:?}", tape.shape(patches)),
        ));
    }
    tape.mean_axis(patches, 1)
}

/// Block applied once across all patch tokens `v: [N_p × d]`.
pub fn global_informer(
    tape: &mut Tape,
    v: Var,
    w: &BlockWeights<Var>,
    attn: &AttentionConfig,
) -> Result<Var> {
    let n = tape.shape(v)[0];
    informer_block(tape, v, w, attn, n)
}

/// Runs the GRU over the rows of `seq: [N_p × d]` from `h₀ = 0` and returns
/// the final hidden state `[d]`.
pub fn gru_aggregate(tape: &mut Tape, seq: Var, w: &GruWeights<Var>) -> Result<Var> {
    let shape = tape.shape(seq).to_vec();
    let [steps, d] = shape[..] else {
        return Err(Error::shape(
            "gru_aggregate",
            format!("expected [N_p×d], got {shape:?}"),
        ));
    };
    let w_r = tape.transpose(w.w_r)?;
    let w_z = tape.transpose(w.w_z)?;
    let w_h = tape.transpose(w.w_h)?;
    let gate = |tape: &mut Tape, input: Var, wt: Var, b: Var| -> Result<Var> {
        let lin = tape.matmul(input, wt)?;
        tape.add_bias(lin, b)
    };

    let mut h = tape.constant(Tensor::zeros([1, d]));
    for p in 0..steps {
        let x = tape.slice(seq, 0, p, 1)?;
        let hx = tape.concat_last_axis(h, x)?;
        let r = gate(tape, hx, w_r, w.b_r)?;
        let r = tape.sigmoid(r)?;
        let z = gate(tape, hx, w_z, w.b_z)?;
        let z = tape.sigmoid(z)?;
        let rh = tape.mul(r, h)?;
        let rhx = tape.concat_last_axis(rh, x)?;
        let cand = gate(tape, rhx, w_h, w.b_h)?;
        let cand = tape.tanh(cand)?;
        // (1 − z)⊙h + z⊙h̃
        let zh = tape.mul(z, h)?;
        let keep = tape.sub(h, zh)?;
        let update = tape.mul(z, cand)?;
        h = tape.add(keep, update)?;
    }
    tape.reshape(h, &[d])
}

/// `h · W_out + b_out`, all `H` steps at once.
pub fn forecast_head(tape: &mut Tape, h: Var, w: Var, b: Var) -> Result<Var> {
    let d = tape.shape(h).iter().product();
    let row = tape.reshape(h, &[1, d])?;
    let y = tape.matmul(row, w)?;
    let y = tape.add_bias(y, b)?;
    let horizon = tape.shape(y)[1];
    tape.reshape(y, &[horizon])
}

/// Full pipeline for one normalized window `x: [L × F]`, returning `[H]`.
pub fn forward(
    tape: &mut Tape,
    x: Var,
    w: &TwinFormerWeights<Var>,
    cfg: &ModelConfig,
) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    if xs != [cfg.seq_len, cfg.n_features] {
        return Err(Error::shape(
            "forward",
            format!(
                "window {xs:?} does not match [seq_len={}, n_features={}]",
                cfg.seq_len, cfg.n_features
            ),
        ));
    }
    let attn = cfg.attention();
    let z0 = embed(tape, x, w.embed_w, w.embed_b)?;
    let patches = patchify(tape, z0, cfg.patch_len)?;
    let local = local_informer(tape, patches, &w.local, &attn)?;
    let pooled = mean_pool(tape, local)?;
    let global = global_informer(tape, pooled, &w.global, &attn)?;
    let h = gru_aggregate(tape, global, &w.gru)?;
    forecast_head(tape, h, w.head_w, w.head_b)
}
