#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twinformer::gradcheck::{central_difference, max_relative_error, sample_coords, STEP};
use twinformer::model::{forward, ModelConfig, TwinFormerParams, TwinFormerWeights};
use twinformer::training::l2_loss;
use twinformer::{Result, Tape, Tensor};

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        seq_len: 12,
        patch_len: 4,
        d_model: 8,
        heads: 2,
        top_k: 3,
        ffn_mult: 2,
        horizon: 2,
        n_features: 1,
        target_index: 0,
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// Seeded parameters with every entry (biases and LayerNorm terms included)
/// drawn away from its default, so no gradient vanishes by construction.
pub fn random_params(cfg: &ModelConfig, seed: u64) -> TwinFormerParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TwinFormerWeights::shapes(cfg)
        .try_map(&mut |_, s| Ok(random_tensor(&mut rng, s, 0.8)))
        .unwrap()
}

fn loss_on_tape(
    params: &TwinFormerParams,
    cfg: &ModelConfig,
    x: &Tensor,
    y: &Tensor,
    trainable: bool,
) -> Result<(Tape, TwinFormerWeights<twinformer::Var>, f64)> {
    let mut tape = Tape::new();
    let w = params.register(&mut tape, trainable);
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let pred = forward(&mut tape, xv, &w, cfg)?;
    let loss = l2_loss(&mut tape, pred, yv)?;
    let value = tape.value(loss).data()[0];
    if trainable {
        tape.backward(loss)?;
    }
    Ok((tape, w, value))
}

pub struct TensorCheck {
    pub name: String,
    pub coords: usize,
    pub max_rel_err: f64,
}

/// Compares tape gradients of the L2 loss on one random window against
/// central differences, `per_tensor` coordinates per parameter tensor.
pub fn full_model_gradcheck(
    cfg: &ModelConfig,
    seed: u64,
    per_tensor: usize,
) -> Result<Vec<TensorCheck>> {
    let params = random_params(cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let x = random_tensor(&mut rng, &[cfg.seq_len, cfg.n_features], 1.0);
    let y = random_tensor(&mut rng, &[cfg.horizon], 1.0);

    let (tape, vars, _) = loss_on_tape(&params, cfg, &x, &y, true)?;
    let mut out = Vec::new();
    for ((name, var), (_, tensor)) in vars.slots().into_iter().zip(params.slots()) {
        let analytic_all = tape
            .grad(*var)
            .expect("every parameter reaches the loss")
            .to_vec();
        let coords = sample_coords(tensor.numel(), per_tensor);
        let analytic: Vec<f64> = coords.iter().map(|&i| analytic_all[i]).collect();
        let numeric = central_difference(
            |data| {
                let mut p = params.clone();
                p.visit_mut(&mut |n, t| {
                    if n == name {
                        t.data_mut().copy_from_slice(data);
                    }
                });
                Ok(loss_on_tape(&p, cfg, &x, &y, false)?.2)
            },
            tensor.data(),
            &coords,
            STEP,
        )?;
        out.push(TensorCheck {
            name,
            coords: coords.len(),
            max_rel_err: max_relative_error(&analytic, &numeric),
        });
    }
    Ok(out)
}
