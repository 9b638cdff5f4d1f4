use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::l2_loss;
use super::metrics::{evaluate, Metrics};
use crate::data::{Window, WindowedDataset};
use crate::error::{Error, Result};
use crate::model::{forward, TwinFormer, TwinFormerParams};
use crate::numerics::{Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    /// Shuffling seed; run configs set it from their top-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            max_epochs: 20,
            patience: 5,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        for (name, v) in [
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("batch_size", self.batch_size),
        ] {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-window loss over the epoch, before each batch's update.
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
    pub epochs_without_improvement: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Whether patience ran out before `max_epochs`.
    pub early_stopped: bool,
    pub test: Metrics,
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss` rows with shortest round-trip floats.
    pub fn loss_curve_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
        }
        out
    }
}

/// Loss and parameter gradients for one window, on a fresh tape.
fn window_gradients(model: &TwinFormer, window: &Window) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let w = model.params.register(&mut tape, true);
    let x = tape.constant(window.input.clone());
    let y = forward(&mut tape, x, &w, &model.config)?;
    let target = tape.constant(Tensor::vector(window.target.clone())?);
    let loss = l2_loss(&mut tape, y, target)?;
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    tape.backward(loss)?;
    let mut grads = Vec::new();
    let mut missing = None;
    w.visit(&mut |name, &v| match tape.grad(v) {
        Some(g) => grads.push(g.to_vec()),
        None => {
            missing.get_or_insert(name);
        }
    });
    if let Some(name) = missing {
        return Err(Error::MissingGradient(name));
    }
    Ok((value, grads))
}

/// Mean loss over `windows` with the current parameters.
pub fn mean_loss(model: &TwinFormer, windows: &[Window]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Data(
            "cannot compute loss over an empty split".into(),
        ));
    }
    let mut total = 0.0;
    for w in windows {
        let pred = model.predict(&w.input)?;
        let sq: f64 = pred
            .data()
            .iter()
            .zip(&w.target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        total += sq / w.target.len() as f64;
    }
    Ok(total / windows.len() as f64)
}

fn in_batch(epoch: usize, batch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

/// Mini-batch Adam on the training split with early stopping on the
/// validation loss. On return `model` holds the best-validation parameters.
pub fn train(
    model: &mut TwinFormer,
    dataset: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.train.is_empty() || dataset.val.is_empty() {
        return Err(Error::Data(
            "training needs non-empty train and val splits".into(),
        ));
    }
    let started = Instant::now();
    let adam = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::default();
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, TwinFormerParams)> = None;
    let mut stale = 0;
    let mut early_stopped = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let wrap = in_batch(epoch, b + 1);
            let mut acc: Option<Vec<Vec<f64>>> = None;
            for &i in batch {
                let (loss, grads) = window_gradients(model, &dataset.train[i]).map_err(&wrap)?;
                loss_sum += loss;
                match &mut acc {
                    None => acc = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.iter_mut().zip(g).for_each(|(a, g)| *a += g);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let mut grads = acc.expect("chunks are non-empty").into_iter();
            model.params.visit_mut(&mut |_, p| {
                let mut g = grads.next().expect("one gradient per parameter");
                g.iter_mut().for_each(|v| *v *= scale);
                p.grad = Some(g);
            });
            adam_step(&mut model.params, &mut state, &adam).map_err(&wrap)?;
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_loss = mean_loss(model, &dataset.val)
            .map_err(|e| in_batch(epoch, 0)(e))
            .and_then(|v| {
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Numeric(format!(
                        "epoch {epoch}: validation loss is {v}"
                    )))
                }
            })?;
        let improved = best.as_ref().is_none_or(|(_, b, _)| val_loss < *b);
        if improved {
            best = Some((epoch, val_loss, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        log::info!("epoch {epoch}: train {train_loss:.6e}, val {val_loss:.6e}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            improved,
            epochs_without_improvement: stale,
        });
        if stale >= cfg.patience {
            early_stopped = epoch < cfg.max_epochs;
            break;
        }
    }

    let stopped_epoch = epochs.len();
    let (best_epoch, best_val_loss, params) = best.expect("at least one epoch ran");
    model.params = params;
    let test = evaluate(model, &dataset.test, &dataset.scaler, dataset.target_index)?;
    Ok(TrainReport {
        epochs,
        stopped_epoch,
        best_epoch,
        best_val_loss,
        early_stopped,
        test,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}
