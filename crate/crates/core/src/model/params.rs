//! Learnable parameters, generic over the slot type so the same layout
//! holds tensors, tape variables, or shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::attention::AttentionWeights;
use crate::error::Result;
use crate::numerics::{Tape, Tensor, Var};

type MapFn<'f, T, U> = dyn FnMut(&str, &T) -> Result<U> + 'f;

/// One attention + feed-forward block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights<T> {
    pub attn: AttentionWeights<T>,
    pub ffn_w1: T,
    pub ffn_b1: T,
    pub ffn_w2: T,
    pub ffn_b2: T,
    pub ln_gamma: T,
    pub ln_beta: T,
}

impl<T> BlockWeights<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.attn.visit(&format!("{prefix}.attn"), f);
        f(format!("{prefix}.ffn.w1"), &self.ffn_w1);
        f(format!("{prefix}.ffn.b1"), &self.ffn_b1);
        f(format!("{prefix}.ffn.w2"), &self.ffn_w2);
        f(format!("{prefix}.ffn.b2"), &self.ffn_b2);
        f(format!("{prefix}.ln.gamma"), &self.ln_gamma);
        f(format!("{prefix}.ln.beta"), &self.ln_beta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        self.attn.visit_mut(&format!("{prefix}.attn"), f);
        f(format!("{prefix}.ffn.w1"), &mut self.ffn_w1);
        f(format!("{prefix}.ffn.b1"), &mut self.ffn_b1);
        f(format!("{prefix}.ffn.w2"), &mut self.ffn_w2);
        f(format!("{prefix}.ffn.b2"), &mut self.ffn_b2);
        f(format!("{prefix}.ln.gamma"), &mut self.ln_gamma);
        f(format!("{prefix}.ln.beta"), &mut self.ln_beta);
    }

    fn try_map<U>(&self, prefix: &str, f: &mut MapFn<'_, T, U>) -> Result<BlockWeights<U>> {
        Ok(BlockWeights {
            attn: self.attn.try_map(&format!("{prefix}.attn"), f)?,
            ffn_w1: f(&format!("{prefix}.ffn.w1"), &self.ffn_w1)?,
            ffn_b1: f(&format!("{prefix}.ffn.b1"), &self.ffn_b1)?,
            ffn_w2: f(&format!("{prefix}.ffn.w2"), &self.ffn_w2)?,
            ffn_b2: f(&format!("{prefix}.ffn.b2"), &self.ffn_b2)?,
            ln_gamma: f(&format!("{prefix}.ln.gamma"), &self.ln_gamma)?,
            ln_beta: f(&format!("{prefix}.ln.beta"), &self.ln_beta)?,
        })
    }
}

/// GRU gates. Each matrix is `d × 2d` and acts on `[h; x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruWeights<T> {
    pub w_r: T,
    pub b_r: T,
    pub w_z: T,
    pub b_z: T,
    pub w_h: T,
    pub b_h: T,
}

impl<T> GruWeights<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        f(format!("{prefix}.w_r"), &self.w_r);
        f(format!("{prefix}.b_r"), &self.b_r);
        f(format!("{prefix}.w_z"), &self.w_z);
        f(format!("{prefix}.b_z"), &self.b_z);
        f(format!("{prefix}.w_h"), &self.w_h);
        f(format!("{prefix}.b_h"), &self.b_h);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        f(format!("{prefix}.w_r"), &mut self.w_r);
        f(format!("{prefix}.b_r"), &mut self.b_r);
        f(format!("{prefix}.w_z"), &mut self.w_z);
        f(format!("{prefix}.b_z"), &mut self.b_z);
        f(format!("{prefix}.w_h"), &mut self.w_h);
        f(format!("{prefix}.b_h"), &mut self.b_h);
    }

    pub fn try_map<U>(&self, prefix: &str, f: &mut MapFn<'_, T, U>) -> Result<GruWeights<U>> {
        Ok(GruWeights {
            w_r: f(&format!("{prefix}.w_r"), &self.w_r)?,
            b_r: f(&format!("{prefix}.b_r"), &self.b_r)?,
            w_z: f(&format!("{prefix}.w_z"), &self.w_z)?,
            b_z: f(&format!("{prefix}.b_z"), &self.b_z)?,
            w_h: f(&format!("{prefix}.w_h"), &self.w_h)?,
            b_h: f(&format!("{prefix}.b_h"), &self.b_h)?,
        })
    }
}

/// The complete parameter set. Every slot has a unique dotted name such as
/// `local.attn.w_q` or `gru.b_z`; visiting order is fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct TwinFormerWeights<T> {
    pub embed_w: T,
    pub embed_b: T,
    pub local: BlockWeights<T>,
    pub global: BlockWeights<T>,
    pub gru: GruWeights<T>,
    pub head_w: T,
    pub head_b: T,
}

pub type TwinFormerParams = TwinFormerWeights<Tensor>;

impl<T> TwinFormerWeights<T> {
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a T)) {
        f("embed.w".into(), &self.embed_w);
        f("embed.b".into(), &self.embed_b);
        self.local.visit("local", f);
        self.global.visit("global", f);
        self.gru.visit("gru", f);
        f("head.w".into(), &self.head_w);
        f("head.b".into(), &self.head_b);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut T)) {
        f("embed.w".into(), &mut self.embed_w);
        f("embed.b".into(), &mut self.embed_b);
        self.local.visit_mut("local", f);
        self.global.visit_mut("global", f);
        self.gru.visit_mut("gru", f);
        f("head.w".into(), &mut self.head_w);
        f("head.b".into(), &mut self.head_b);
    }

    pub fn try_map<U>(&self, f: &mut MapFn<'_, T, U>) -> Result<TwinFormerWeights<U>> {
        Ok(TwinFormerWeights {
            embed_w: f("embed.w", &self.embed_w)?,
            embed_b: f("embed.b", &self.embed_b)?,
            local: self.local.try_map("local", f)?,
            global: self.global.try_map("global", f)?,
            gru: self.gru.try_map("gru", f)?,
            head_w: f("head.w", &self.head_w)?,
            head_b: f("head.b", &self.head_b)?,
        })
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |name, _| names.push(name));
        names
    }

    /// Slots in visiting order.
    pub fn slots(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name, t)));
        out
    }
}

impl TwinFormerWeights<Vec<usize>> {
    /// Declared shape of every parameter for `cfg`.
    pub fn shapes(cfg: &ModelConfig) -> Self {
        let (d, f, h, w) = (cfg.d_model, cfg.n_features, cfg.horizon, cfg.ffn_width());
        let block = || BlockWeights {
            attn: AttentionWeights {
                w_q: vec![d, d],
                w_k: vec![d, d],
                w_v: vec![d, d],
                w_o: vec![d, d],
            },
            ffn_w1: vec![d, w],
            ffn_b1: vec![w],
            ffn_w2: vec![w, d],
            ffn_b2: vec![d],
            ln_gamma: vec![d],
            ln_beta: vec![d],
        };
        TwinFormerWeights {
            embed_w: vec![f, d],
            embed_b: vec![d],
            local: block(),
            global: block(),
            gru: GruWeights {
                w_r: vec![d, 2 * d],
                b_r: vec![d],
                w_z: vec![d, 2 * d],
                b_z: vec![d],
                w_h: vec![d, 2 * d],
                b_h: vec![d],
            },
            head_w: vec![d, h],
            head_b: vec![h],
        }
    }
}

impl TwinFormerParams {
    /// Seeded initialization: weight matrices uniform in
    /// `±√(6 / (fan_in + fan_out))`, biases and LayerNorm beta zero,
    /// LayerNorm gamma one.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TwinFormerWeights::shapes(cfg).try_map(&mut |name, shape| {
            Ok(match shape.as_slice() {
                &[rows, cols] => {
                    let bound = (6.0 / (rows + cols) as f64).sqrt();
                    let data = (0..rows * cols)
                        .map(|_| rng.random_range(-bound..=bound))
                        .collect();
                    Tensor::new(shape.clone(), data)?
                }
                _ if name.ends_with("ln.gamma") => Tensor::full(shape.clone(), 1.0),
                _ => Tensor::zeros(shape.clone()),
            })
        })
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        TwinFormerWeights::shapes(cfg)
            .try_map(&mut |_, shape| Ok(Tensor::zeros(shape.clone())))
            .expect("zero init cannot fail")
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.numel());
        n
    }

    /// Records every parameter on `tape`, as differentiable leaves when
    /// `trainable`, otherwise as constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> TwinFormerWeights<Var> {
        self.try_map(&mut |_, t| {
            Ok(if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            })
        })
        .expect("registration cannot fail")
    }

    pub fn clear_grads(&mut self) {
        self.visit_mut(&mut |_, t| t.zero_grad());
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn names_are_unique_and_stable() {
        let cfg = ModelConfig::default();
        let params = TwinFormerParams::init(&cfg, 0).unwrap();
        let names = params.names();
        assert_eq!(names.len(), 30);
        assert_eq!(names.iter().collect::<HashSet<_>>().len(), names.len());
        assert_eq!(names[0], "embed.w");
        assert_eq!(names[2], "local.attn.w_q");
        assert_eq!(names.last().unwrap(), "head.b");
    }

    #[test]
    fn init_matches_declared_shapes_and_scheme() {
        let cfg = ModelConfig::default();
        let params = TwinFormerParams::init(&cfg, 3).unwrap();
        let shapes = TwinFormerWeights::shapes(&cfg);
        for ((name, t), (_, s)) in params.slots().into_iter().zip(shapes.slots()) {
            assert_eq!(t.shape(), s.as_slice(), "{name}");
            if let [r, c] = *s.as_slice() {
                let bound = (6.0 / (r + c) as f64).sqrt();
                assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
            } else if name.ends_with("gamma") {
                assert!(t.data().iter().all(|&v| v == 1.0));
            } else {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
        assert_eq!(params, TwinFormerParams::init(&cfg, 3).unwrap());
        assert_ne!(params, TwinFormerParams::init(&cfg, 4).unwrap());
    }
}
