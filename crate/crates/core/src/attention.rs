//! Multi-head top-k sparse self-attention.
//!
//! Per head: logits `QKᵀ/√d_k`, keep the `k` largest logits in each row,
//! softmax the survivors, and mix the values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub heads: usize,
    pub top_k: usize,
}

impl AttentionConfig {
    pub fn new(d_model: usize, heads: usize, top_k: usize) -> Result<Self> {
        let cfg = AttentionConfig {
            d_model,
            heads,
            top_k,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model ({}) must be a positive multiple of heads ({})",
                self.d_model, self.heads
            )));
        }
        if self.top_k < 1 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

/// Bias-free projections, each `d_model × d_model`. Heads use column
/// blocks of the fused Q/K/V matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights<T> {
    pub w_q: T,
    pub w_k: T,
    pub w_v: T,
    pub w_o: T,
}

impl<T> AttentionWeights<T> {
    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        f(format!("{prefix}.w_q"), &self.w_q);
        f(format!("{prefix}.w_k"), &self.w_k);
        f(format!("{prefix}.w_v"), &self.w_v);
        f(format!("{prefix}.w_o"), &self.w_o);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        f(format!("{prefix}.w_q"), &mut self.w_q);
        f(format!("{prefix}.w_k"), &mut self.w_k);
        f(format!("{prefix}.w_v"), &mut self.w_v);
        f(format!("{prefix}.w_o"), &mut self.w_o);
    }

    pub fn try_map<U>(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &T) -> Result<U>,
    ) -> Result<AttentionWeights<U>> {
        Ok(AttentionWeights {
            w_q: f(&format!("{prefix}.w_q"), &self.w_q)?,
            w_k: f(&format!("{prefix}.w_k"), &self.w_k)?,
            w_v: f(&format!("{prefix}.w_v"), &self.w_v)?,
            w_o: f(&format!("{prefix}.w_o"), &self.w_o)?,
        })
    }
}

/// Single-head sparse attention `softmax(topk(QKᵀ/√d_k)) · V`.
///
/// When `k` is at least the sequence length no mask is applied, which makes
/// this exactly dense scaled dot-product attention.
pub fn csa_single_head(tape: &mut Tape, q: Var, k: Var, v: Var, top_k: usize) -> Result<Var> {
    let (qs, ks, vs) = (
        tape.shape(q).to_vec(),
        tape.shape(k).to_vec(),
        tape.shape(v).to_vec(),
    );
    if qs.len() != 2 || qs != ks || ks[0] != vs[0] {
        return Err(Error::shape(
            "csa_single_head",
            format!("Q {qs:?}, K {ks:?}, V {vs:?}"),
        ));
    }
    if top_k < 1 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    let (n, d_k) = (qs[0], qs[1]);
    let kt = tape.transpose(k)?;
    let raw = tape.matmul(q, kt)?;
    let logits = tape.scale(raw, 1.0 / (d_k as f64).sqrt())?;
    let masked = if top_k >= n {
        logits
    } else {
        tape.topk_mask_rows(logits, top_k)?
    };
    let weights = tape.softmax_rows(masked)?;
    tape.matmul(weights, v)
}

/// Multi-head sparse self-attention over the full sequence `x: [n × d]`.
pub fn multi_head_csa(
    tape: &mut Tape,
    x: Var,
    params: &AttentionWeights<Var>,
    cfg: &AttentionConfig,
) -> Result<Var> {
    let n = tape.shape(x).first().copied().unwrap_or(0);
    multi_head_csa_segmented(tape, x, params, cfg, n)
}

/// Multi-head sparse self-attention restricted to contiguous row segments
/// of length `segment`; rows in different segments never attend to each
/// other. Projections are shared across segments.
pub fn multi_head_csa_segmented(
    tape: &mut Tape,
    x: Var,
    params: &AttentionWeights<Var>,
    cfg: &AttentionConfig,
    segment: usize,
) -> Result<Var> {
    cfg.validate()?;
    let shape = tape.shape(x).to_vec();
    if shape.len() != 2 || shape[1] != cfg.d_model {
        return Err(Error::shape(
            "multi_head_csa",
            format!("input {shape:?} does not end in d_model = {}", cfg.d_model),
        ));
    }
    let n = shape[0];
    if segment == 0 || !n.is_multiple_of(segment) {
        return Err(Error::shape(
            "multi_head_csa",
            format!("{n} rows do not split into segments of {segment}"),
        ));
    }
    let q = tape.matmul(x, params.w_q)?;
    let k = tape.matmul(x, params.w_k)?;
    let v = tape.matmul(x, params.w_v)?;
    let dk = cfg.head_dim();

    let mut segments = Vec::with_capacity(n / segment);
    for start in (0..n).step_by(segment) {
        let (qs, ks, vs) = if segment == n {
            (q, k, v)
        } else {
            (
                tape.slice(q, 0, start, segment)?,
                tape.slice(k, 0, start, segment)?,
                tape.slice(v, 0, start, segment)?,
            )
        };
        let mut heads = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let (qh, kh, vh) = if cfg.heads == 1 {
                (qs, ks, vs)
            } else {
                (
                    tape.slice(qs, 1, h * dk, dk)?,
                    tape.slice(ks, 1, h * dk, dk)?,
                    tape.slice(vs, 1, h * dk, dk)?,
                )
            };
            heads.push(csa_single_head(tape, qh, kh, vh, cfg.top_k)?);
        }
        let merged = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat(&heads, 1)?
        };
        segments.push(merged);
    }
    let mixed = if segments.len() == 1 {
        segments[0]
    } else {
        tape.concat(&segments, 0)?
    };
    tape.matmul(mixed, params.w_o)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::gradcheck::{central_difference, max_relative_error, STEP};
    use crate::numerics::Tensor;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::new(
            [rows, cols],
            (0..rows * cols)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    fn identity(n: usize, scale: f64) -> Tensor {
        let mut t = Tensor::zeros([n, n]);
        for i in 0..n {
            t.data_mut()[i * n + i] = scale;
        }
        t
    }

    /// Plain-loop dense attention `softmax(QKᵀ/√d) V` with an optional
    /// sort-based top-k mask.
    fn oracle(
        q: &[f64],
        k: &[f64],
        v: &[f64],
        n: usize,
        d: usize,
        dv: usize,
        top_k: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; n * dv];
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| {
                    (0..d).map(|c| q[i * d + c] * k[j * d + c]).sum::<f64>() / (d as f64).sqrt()
                })
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap().then(a.cmp(&b)));
            let kept = &order[..top_k.min(n)];
            let max = kept
                .iter()
                .map(|&j| logits[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = kept.iter().map(|&j| (logits[j] - max).exp()).sum();
            for &j in kept {
                let w = (logits[j] - max).exp() / z;
                for c in 0..dv {
                    out[i * dv + c] += w * v[j * dv + c];
                }
            }
        }
        out
    }

    fn matmul(a: &[f64], b: &[f64], m: usize, p: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = (0..p).map(|c| a[i * p + c] * b[c * n + j]).sum();
            }
        }
        out
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    fn params(tape: &mut Tape, w: &AttentionWeights<Tensor>) -> AttentionWeights<Var> {
        w.try_map("attn", &mut |_, t| Ok(tape.leaf(t.clone())))
            .unwrap()
    }

    #[test]
    fn config_rejects_indivisible_heads() {
        assert!(AttentionConfig::new(8, 3, 2).is_err());
        assert!(AttentionConfig::new(8, 2, 0).is_err());
        assert_eq!(AttentionConfig::new(8, 2, 3).unwrap().head_dim(), 4);
    }

    #[test]
    fn single_key_returns_its_value() {
        let mut tape = Tape::new();
        let q = tape.constant(Tensor::new([1, 3], vec![0.3, -2.0, 1.0]).unwrap());
        let k = tape.constant(Tensor::new([1, 3], vec![1.5, 0.1, -0.7]).unwrap());
        let v = tape.constant(Tensor::new([1, 3], vec![4.0, 5.0, 6.0]).unwrap());
        let out = csa_single_head(&mut tape, q, k, v, 1).unwrap();
        assert_eq!(tape.value(out).data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn dense_when_k_covers_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (q, k, v) = (
            random(&mut rng, 8, 4),
            random(&mut rng, 8, 4),
            random(&mut rng, 8, 4),
        );
        let want = oracle(q.data(), k.data(), v.data(), 8, 4, 4, 8);
        let mut tape = Tape::new();
        let (qv, kv, vv) = (tape.constant(q), tape.constant(k), tape.constant(v));
        let out = csa_single_head(&mut tape, qv, kv, vv, 8).unwrap();
        assert!(max_abs_diff(tape.value(out).data(), &want) <= 1e-12);
    }

    #[test]
    fn k1_with_sharp_self_match_copies_values() {
        let mut tape = Tape::new();
        let q = tape.constant(identity(2, 10.0));
        let k = tape.constant(identity(2, 10.0));
        let v = tape.constant(identity(2, 1.0));
        let out = csa_single_head(&mut tape, q, k, v, 1).unwrap();
        // Each query keeps only its own key, so the weight is exactly 1.
        assert_eq!(tape.value(out).data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_projections_reduce_to_dense_self_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 6, 4);
        let cfg = AttentionConfig::new(4, 1, 6).unwrap();
        let w = AttentionWeights {
            w_q: identity(4, 1.0),
            w_k: identity(4, 1.0),
            w_v: identity(4, 1.0),
            w_o: identity(4, 1.0),
        };
        let mut tape = Tape::new();
        let p = params(&mut tape, &w);
        let xv = tape.constant(x.clone());
        let out = multi_head_csa(&mut tape, xv, &p, &cfg).unwrap();
        let want = oracle(x.data(), x.data(), x.data(), 6, 4, 4, 6);
        assert!(max_abs_diff(tape.value(out).data(), &want) <= 1e-12);
    }

    #[test]
    fn two_heads_match_manual_split_and_concat() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, d, dk) = (4, 8, 4);
        let x = random(&mut rng, n, d);
        let w = AttentionWeights {
            w_q: random(&mut rng, d, d),
            w_k: random(&mut rng, d, d),
            w_v: random(&mut rng, d, d),
            w_o: random(&mut rng, d, d),
        };
        let cfg = AttentionConfig::new(d, 2, 2).unwrap();
        let mut tape = Tape::new();
        let p = params(&mut tape, &w);
        let xv = tape.constant(x.clone());
        let out = multi_head_csa(&mut tape, xv, &p, &cfg).unwrap();

        let q = matmul(x.data(), w.w_q.data(), n, d, d);
        let k = matmul(x.data(), w.w_k.data(), n, d, d);
        let v = matmul(x.data(), w.w_v.data(), n, d, d);
        let cols = |m: &[f64], h: usize| -> Vec<f64> {
            (0..n)
                .flat_map(|i| m[i * d + h * dk..i * d + (h + 1) * dk].to_vec())
                .collect()
        };
        let mut merged = vec![0.0; n * d];
        for h in 0..2 {
            let o = oracle(&cols(&q, h), &cols(&k, h), &cols(&v, h), n, dk, dk, 2);
            for i in 0..n {
                merged[i * d + h * dk..i * d + (h + 1) * dk]
                    .copy_from_slice(&o[i * dk..(i + 1) * dk]);
            }
        }
        let want = matmul(&merged, w.w_o.data(), n, d, d);
        assert!(max_abs_diff(tape.value(out).data(), &want) <= 1e-12);
    }

    #[test]
    fn zero_value_projection_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = AttentionWeights {
            w_q: random(&mut rng, 8, 8),
            w_k: random(&mut rng, 8, 8),
            w_v: Tensor::zeros([8, 8]),
            w_o: random(&mut rng, 8, 8),
        };
        let cfg = AttentionConfig::new(8, 2, 3).unwrap();
        let mut tape = Tape::new();
        let p = params(&mut tape, &w);
        let xv = tape.constant(random(&mut rng, 5, 8));
        let out = multi_head_csa(&mut tape, xv, &p, &cfg).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn segments_do_not_attend_across_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = AttentionWeights {
            w_q: random(&mut rng, 4, 4),
            w_k: random(&mut rng, 4, 4),
            w_v: random(&mut rng, 4, 4),
            w_o: random(&mut rng, 4, 4),
        };
        let cfg = AttentionConfig::new(4, 2, 2).unwrap();
        let x = random(&mut rng, 6, 4);
        let mut perturbed = x.clone();
        for v in &mut perturbed.data_mut()[12..] {
            *v += 0.5;
        }
        let run = |x: Tensor| {
            let mut tape = Tape::new();
            let p = params(&mut tape, &w);
            let xv = tape.constant(x);
            let out = multi_head_csa_segmented(&mut tape, xv, &p, &cfg, 3).unwrap();
            tape.value(out).data().to_vec()
        };
        let (a, b) = (run(x), run(perturbed));
        assert_eq!(a[..12], b[..12]);
        assert_ne!(a[12..], b[12..]);
    }

    #[test]
    fn attention_parameter_gradients_match_finite_differences() {
        // n=6, d=8, h=2, k=3
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random(&mut rng, 6, 8);
        let w = AttentionWeights {
            w_q: random(&mut rng, 8, 8),
            w_k: random(&mut rng, 8, 8),
            w_v: random(&mut rng, 8, 8),
            w_o: random(&mut rng, 8, 8),
        };
        let target = random(&mut rng, 6, 8);
        let cfg = AttentionConfig::new(8, 2, 3).unwrap();
        let loss_of =
            |w: &AttentionWeights<Tensor>, leaves: bool| -> (Tape, Var, AttentionWeights<Var>) {
                let mut tape = Tape::new();
                let p = w
                    .try_map("attn", &mut |_, t| {
                        Ok(if leaves {
                            tape.leaf(t.clone())
                        } else {
                            tape.constant(t.clone())
                        })
                    })
                    .unwrap();
                let xv = tape.constant(x.clone());
                let out = multi_head_csa(&mut tape, xv, &p, &cfg).unwrap();
                let tv = tape.constant(target.clone());
                let prod = tape.mul(out, tv).unwrap();
                let loss = tape.sum(prod).unwrap();
                (tape, loss, p)
            };
        let (mut tape, loss, vars) = loss_of(&w, true);
        tape.backward(loss).unwrap();
        let mut names = Vec::new();
        vars.visit("attn", &mut |name, v| names.push((name, *v)));
        for (idx, (name, var)) in names.iter().enumerate() {
            let analytic = tape.grad(*var).unwrap().to_vec();
            let base = match idx {
                0 => &w.w_q,
                1 => &w.w_k,
                2 => &w.w_v,
                _ => &w.w_o,
            };
            let coords: Vec<usize> = (0..64).collect();
            let numeric = central_difference(
                |data| {
                    let mut w2 = w.clone();
                    let slot = match idx {
                        0 => &mut w2.w_q,
                        1 => &mut w2.w_k,
                        2 => &mut w2.w_v,
                        _ => &mut w2.w_o,
                    };
                    slot.data_mut().copy_from_slice(data);
                    let (t, l, _) = loss_of(&w2, false);
                    Ok(t.value(l).data()[0])
                },
                base.data(),
                &coords,
                STEP,
            )
            .unwrap();
            let err = max_relative_error(&analytic, &numeric);
            assert!(err <= 1e-4, "{name}: {err:e}");
        }
    }
}
